#include "lasgd/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "lasgd/random.hpp"

namespace lasgd {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<std::size_t> Dataset::shard_of(std::size_t rank, std::size_t num_nodes) const {
  if (rank >= num_nodes) throw std::out_of_range("shard_of: rank out of range");
  const auto chunks = partition_chunks(size(), num_nodes);
  std::vector<std::size_t> idx(chunks[rank].size());
  std::iota(idx.begin(), idx.end(), chunks[rank].begin);
  return idx;
}

std::vector<std::size_t> Dataset::all_indices() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

Dataset make_synthetic(std::uint64_t seed, std::size_t n, std::size_t d, double noise, TaskKind kind) {
  if (n == 0 || d == 0) throw std::invalid_argument("make_synthetic: n and d must be >= 1");
  if (!(noise >= 0.0)) throw std::invalid_argument("make_synthetic: noise must be >= 0");

  Rng rng(mix64(seed));
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset data;
  data.kind = kind;
  data.ground_truth = ParamVector(d);
  for (std::size_t j = 0; j < d; ++j) data.ground_truth[j] = normal(rng);

  data.features = Matrix(n, d);
  for (double& v : data.features.values) v = normal(rng);

  data.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double signal = 0.0;
    const auto row = data.features.row(i);
    for (std::size_t j = 0; j < d; ++j) signal += row[j] * data.ground_truth[j];
    // Draw unconditionally so noise=0 and noise>0 share the feature stream.
    const double eps = normal(rng);
    const double value = noise > 0.0 ? signal + noise * eps : signal;
    data.targets[i] = kind == TaskKind::Regression ? value : (value > 0.0 ? 1.0 : 0.0);
  }
  return data;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (std::size_t j = 0; j < data.num_features(); ++j) out << 'x' << j << ',';
  out << "target\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features.row(i)) out << v << ',';
    out << data.targets[i] << '\n';
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path, TaskKind kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (cols == 0) throw std::runtime_error(path.string() + ": header has no feature columns");

  Dataset data;
  data.kind = kind;
  data.features.cols = cols;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != cols + 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(cols + 1) + " fields");
    }
    data.targets.push_back(row.back());
    row.pop_back();
    data.features.values.insert(data.features.values.end(), row.begin(), row.end());
    ++data.features.rows;
  }
  return data;
}

}  // namespace lasgd
