#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lasgd/collective.hpp"
#include "lasgd/oracles.hpp"
#include "lasgd/param_vector.hpp"
#include "lasgd/schedule.hpp"

namespace lasgd {

enum class Algorithm { SgdAllReduce, Lasgd, Easgd };

const char* to_string(Algorithm algo) noexcept;
std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept;

/**
 * Optional momentum / weight decay applied to the raw gradient before the
 * local step. With g' = g + weight_decay * x and v <- momentum * v + g', the
 * step direction is v, or g' + momentum * v for Nesterov. All zero by default,
 * in which case the gradient is used untouched.
 */
struct LocalStepModifier {
  double momentum = 0.0;
  bool nesterov = false;
  double weight_decay = 0.0;

  bool enabled() const noexcept { return momentum != 0.0 || weight_decay != 0.0; }
};

/**
 * Elastic-averaging hyperparameters. rho and gamma are optional; when set,
 * they must satisfy alpha = peak_lr * rho and beta = num_nodes * gamma.
 * LASGD runs at alpha = beta = 1.
 */
struct HyperParams {
  LrSchedule schedule;
  double alpha = 1.0;
  double beta = 1.0;
  std::optional<double> rho;
  std::optional<double> gamma;
  std::size_t tau_max = 1;
  std::size_t num_nodes = 1;
  LocalStepModifier modifier;

  std::vector<std::string> validate(Algorithm algo) const;
};

struct NodeState {
  std::size_t rank = 0;
  std::size_t tau_max = 1;
  ParamVector x_local;     // live local model
  ParamVector x_snapshot;  // exactly what was last submitted to the all-reduce
  std::size_t tau = 0;     // local steps in the current round
  std::uint64_t local_clock = 0;
  std::uint64_t global_clock = 0;
  std::optional<CollectiveHandle> pending;
  ParamVector velocity;  // only used when a LocalStepModifier is enabled

  static NodeState fresh(std::size_t rank, std::size_t tau_max, ParamVector x0);
};

enum class NodeAction { ComputedStep, Finalized, WaitingOnCollective };

const char* to_string(NodeAction action) noexcept;

/// alpha * z + (1 - alpha) * x - eta * g.
ParamVector elastic_local_step(const ParamVector& x, const ParamVector& z, const ParamVector& g, double eta,
                               double alpha);

/// (1 - beta) * z + beta * mean(xs), i.e. z + beta * mean(x_i - z).
ParamVector elastic_center_step(const ParamVector& z, std::span<const ParamVector> xs, double beta);

/// Symmetric elastic pull between one worker and the center:
/// x <- x - alpha (x - z), z <- z + alpha (x - z).
std::pair<ParamVector, ParamVector> easgd_round_robin_exchange(const ParamVector& x, const ParamVector& center,
                                                               double alpha);

/// Direction after momentum / weight decay. Returns `g` itself when disabled.
ParamVector apply_modifier(const LocalStepModifier& modifier, NodeState& state, const ParamVector& g);

/// x_local -= eta * g; tau and the local clock advance. Requires tau < tau_max.
void sgd_local_step(NodeState& state, const ParamVector& g, double eta);

/**
 * Folds a finished all-reduce into the node: the new model is the center
 * plus this node's displacement since its last submission, evaluated as
 * x_local + (z - x_snapshot). It becomes both x_local and x_snapshot, the
 * global clock advances and tau resets. Does not submit.
 *
 * Evaluating the shift on the local model keeps a one-node run bit-identical
 * to plain SGD, since z == x_snapshot there.
 */
void lasgd_finalize_round(NodeState& state, const ParamVector& z);

/// Takes z from the node's completed pending handle, finalizes, and submits
/// the new model for the next round. Throws if the handle is absent, in
/// flight, or failed.
void lasgd_finalize_round(NodeState& state, CollectiveEndpoint& endpoint);

/// Decision at a gradient-step boundary, without side effects.
NodeAction lasgd_next_action(const NodeState& state);

struct AppliedStep {
  double eta = 0.0;
  ParamVector direction;  // x_local moved by -eta * direction
};

/// Computes a fresh mini-batch gradient at x_local and applies the local step
/// at eta = lr_at(schedule, local_clock).
AppliedStep lasgd_compute_step(NodeState& state, const GradOracle& oracle, BatchSampler& sampler,
                          const LrSchedule& schedule, const LocalStepModifier& modifier = {});

/// Initialization: one gradient step from x0, then submit for round 0.
void lasgd_initialize(NodeState& state, const GradOracle& oracle, BatchSampler& sampler, const LrSchedule& schedule,
                      CollectiveEndpoint& endpoint, const LocalStepModifier& modifier = {});

/**
 * One pass of the main loop: finalize if the pending all-reduce is done,
 * otherwise take a local step while tau < tau_max, otherwise wait.
 */
NodeAction lasgd_node_tick(NodeState& state, const GradOracle& oracle, BatchSampler& sampler,
                           const LrSchedule& schedule, CollectiveEndpoint& endpoint,
                           const LocalStepModifier& modifier = {});

/// x -= eta * mean_grad for a synchronous round. Shared by every SGD-AR path.
void apply_mean_gradient(NodeState& state, const ParamVector& mean_grad, double eta);

/**
 * Synchronous all-reduce SGD: every node computes a gradient on its next
 * batch, gradients are averaged by ring all-reduce, and every node applies
 * x -= eta * mean. Throws if the models diverge or the collective fails.
 */
void sync_allreduce_sgd_round(std::span<NodeState> states, const GradOracle& oracle,
                              std::span<BatchSampler> samplers, double eta, Transport& transport,
                              std::uint64_t round = 0);

}  // namespace lasgd
