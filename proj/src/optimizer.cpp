#include "lasgd/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace lasgd {
namespace {

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace

const char* to_string(Algorithm algo) noexcept {
  switch (algo) {
    case Algorithm::SgdAllReduce: return "sgd-ar";
    case Algorithm::Lasgd: return "lasgd";
    case Algorithm::Easgd: return "easgd";
  }
  return "unknown";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept {
  if (name == "sgd-ar" || name == "SGD-AR") return Algorithm::SgdAllReduce;
  if (name == "lasgd" || name == "LASGD") return Algorithm::Lasgd;
  if (name == "easgd" || name == "EASGD") return Algorithm::Easgd;
  return std::nullopt;
}

const char* to_string(NodeAction action) noexcept {
  switch (action) {
    case NodeAction::ComputedStep: return "computed_step";
    case NodeAction::Finalized: return "finalized";
    case NodeAction::WaitingOnCollective: return "waiting_on_collective";
  }
  return "unknown";
}

std::vector<std::string> HyperParams::validate(Algorithm algo) const {
  std::vector<std::string> errors;
  for (auto& e : schedule.validate()) errors.push_back("schedule." + e);
  if (tau_max < 1) errors.push_back("tau_max must be >= 1");
  if (num_nodes < 1) errors.push_back("num_nodes must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) errors.push_back("alpha must lie in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) errors.push_back("beta must lie in [0, 1]");
  if (rho && !(*rho >= 0.0)) errors.push_back("rho must be >= 0");
  if (gamma && !(*gamma >= 0.0)) errors.push_back("gamma must be >= 0");
  if (gamma && !close(beta, static_cast<double>(num_nodes) * *gamma)) {
    errors.push_back("beta must equal num_nodes * gamma");
  }
  if (rho && !close(alpha, schedule.peak_lr() * *rho)) errors.push_back("alpha must equal peak_lr * rho");
  if (algo == Algorithm::Lasgd && (alpha != 1.0 || beta != 1.0)) {
    errors.push_back("lasgd requires alpha = beta = 1");
  }
  if (algo == Algorithm::Easgd && !(alpha > 0.0 && alpha < 1.0)) {
    errors.push_back("easgd requires 0 < alpha < 1");
  }
  if (!(modifier.momentum >= 0.0 && modifier.momentum < 1.0)) errors.push_back("momentum must lie in [0, 1)");
  if (!(modifier.weight_decay >= 0.0)) errors.push_back("weight_decay must be >= 0");
  return errors;
}

NodeState NodeState::fresh(std::size_t rank, std::size_t tau_max, ParamVector x0) {
  NodeState s;
  s.rank = rank;
  s.tau_max = tau_max;
  s.x_snapshot = x0;
  s.x_local = std::move(x0);
  return s;
}

ParamVector elastic_local_step(const ParamVector& x, const ParamVector& z, const ParamVector& g, double eta,
                               double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("elastic_local_step: alpha outside [0, 1]");
  if (!(eta > 0.0)) throw std::invalid_argument("elastic_local_step: eta must be > 0");
  require_same_dim(x, g, "elastic_local_step");
  ParamVector out = blend(alpha, z, 1.0 - alpha, x);
  out.add_scaled(-eta, g);
  return out;
}

ParamVector elastic_center_step(const ParamVector& z, std::span<const ParamVector> xs, double beta) {
  if (xs.empty()) throw std::invalid_argument("elastic_center_step: no local models");
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("elastic_center_step: beta outside [0, 1]");
  for (const auto& x : xs) require_same_dim(z, x, "elastic_center_step");
  return blend(1.0 - beta, z, beta, mean_of(xs));
}

std::pair<ParamVector, ParamVector> easgd_round_robin_exchange(const ParamVector& x, const ParamVector& center,
                                                               double alpha) {
  ParamVector pull = blend(alpha, x, -alpha, center);
  ParamVector new_x = x, new_center = center;
  new_x.add_scaled(-1.0, pull);
  new_center.add_scaled(1.0, pull);
  return {std::move(new_x), std::move(new_center)};
}

ParamVector apply_modifier(const LocalStepModifier& modifier, NodeState& state, const ParamVector& g) {
  if (!modifier.enabled()) return g;
  ParamVector grad = g;
  if (modifier.weight_decay != 0.0) grad.add_scaled(modifier.weight_decay, state.x_local);
  if (state.velocity.dim() != grad.dim()) state.velocity = ParamVector(grad.dim());
  state.velocity = blend(modifier.momentum, state.velocity, 1.0, grad);
  if (modifier.nesterov) return blend(1.0, grad, modifier.momentum, state.velocity);
  return state.velocity;
}

void sgd_local_step(NodeState& state, const ParamVector& g, double eta) {
  if (state.tau >= state.tau_max) {
    throw std::logic_error("sgd_local_step: tau already at tau_max; finalize or wait first");
  }
  state.x_local.add_scaled(-eta, g);
  ++state.tau;
  ++state.local_clock;
}

void lasgd_finalize_round(NodeState& state, const ParamVector& z) {
  require_same_dim(state.x_local, z, "lasgd_finalize_round");
  ParamVector shift = blend(1.0, z, -1.0, state.x_snapshot);
  ParamVector next = state.x_local;
  next.add_scaled(1.0, shift);
  state.x_snapshot = next;
  state.x_local = std::move(next);
  ++state.global_clock;
  state.tau = 0;
  state.pending.reset();
}

void lasgd_finalize_round(NodeState& state, CollectiveEndpoint& endpoint) {
  if (!state.pending) throw std::logic_error("lasgd_finalize_round: no collective pending");
  const CollectiveHandle handle = *state.pending;
  switch (handle.status()) {
    case CollectiveStatus::InFlight:
      throw std::logic_error("lasgd_finalize_round: collective still in flight");
    case CollectiveStatus::Failed:
      throw std::runtime_error("lasgd_finalize_round: collective failed: " + handle.failure_reason());
    case CollectiveStatus::Complete:
      break;
  }
  lasgd_finalize_round(state, handle.result(state.rank));
  state.pending = endpoint.submit(state.rank, state.global_clock, state.x_snapshot);
}

NodeAction lasgd_next_action(const NodeState& state) {
  if (state.pending && state.pending->status() != CollectiveStatus::InFlight) return NodeAction::Finalized;
  if (state.tau < state.tau_max) return NodeAction::ComputedStep;
  return NodeAction::WaitingOnCollective;
}

AppliedStep lasgd_compute_step(NodeState& state, const GradOracle& oracle, BatchSampler& sampler,
                               const LrSchedule& schedule, const LocalStepModifier& modifier) {
  AppliedStep step;
  step.eta = lr_at(schedule, state.local_clock);
  const Evaluation ev = oracle.evaluate(state.x_local, sampler.next());
  step.direction = apply_modifier(modifier, state, ev.grad);
  sgd_local_step(state, step.direction, step.eta);
  return step;
}

void lasgd_initialize(NodeState& state, const GradOracle& oracle, BatchSampler& sampler, const LrSchedule& schedule,
                      CollectiveEndpoint& endpoint, const LocalStepModifier& modifier) {
  const double eta = lr_at(schedule, state.local_clock);
  const Evaluation ev = oracle.evaluate(state.x_local, sampler.next());
  state.x_local.add_scaled(-eta, apply_modifier(modifier, state, ev.grad));
  ++state.local_clock;
  state.x_snapshot = state.x_local;
  state.tau = 0;
  state.pending = endpoint.submit(state.rank, state.global_clock, state.x_snapshot);
}

NodeAction lasgd_node_tick(NodeState& state, const GradOracle& oracle, BatchSampler& sampler,
                           const LrSchedule& schedule, CollectiveEndpoint& endpoint,
                           const LocalStepModifier& modifier) {
  const NodeAction action = lasgd_next_action(state);
  switch (action) {
    case NodeAction::Finalized:
      lasgd_finalize_round(state, endpoint);
      break;
    case NodeAction::ComputedStep:
      lasgd_compute_step(state, oracle, sampler, schedule, modifier);
      break;
    case NodeAction::WaitingOnCollective:
      break;
  }
  return action;
}

void apply_mean_gradient(NodeState& state, const ParamVector& mean_grad, double eta) {
  state.x_local.add_scaled(-eta, mean_grad);
  state.x_snapshot = state.x_local;
  ++state.global_clock;
}

void sync_allreduce_sgd_round(std::span<NodeState> states, const GradOracle& oracle,
                              std::span<BatchSampler> samplers, double eta, Transport& transport,
                              std::uint64_t round) {
  if (states.empty() || states.size() != samplers.size()) {
    throw std::invalid_argument("sync_allreduce_sgd_round: need one sampler per node");
  }
  std::vector<ParamVector> grads;
  grads.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    grads.push_back(oracle.evaluate(states[i].x_local, samplers[i].next()).grad);
    ++states[i].local_clock;
  }
  const CollectiveHandle handle = all_reduce_average(grads, transport, round);
  if (handle.status() != CollectiveStatus::Complete) {
    throw std::runtime_error("sync_allreduce_sgd_round: all-reduce failed: " + handle.failure_reason());
  }
  for (auto& st : states) apply_mean_gradient(st, handle.result(st.rank), eta);
  for (std::size_t i = 1; i < states.size(); ++i) {
    if (states[i].x_local != states[0].x_local) {
      throw std::runtime_error("sync_allreduce_sgd_round: node models diverged");
    }
  }
}

}  // namespace lasgd
