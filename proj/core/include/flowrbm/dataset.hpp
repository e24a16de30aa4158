#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace flowrbm {

/// N x D matrix of {0,1} visible vectors, one example per row.
struct BinaryDataset {
  Eigen::MatrixXd rows;
  std::string source;
  double binarize_threshold = 0.5;

  Eigen::Index size() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }

  /// Throws ContractViolation unless every entry is 0 or 1 and N >= 1.
  void validate() const;

  /// Rows selected by `indices`, in that order.
  BinaryDataset subset(const std::vector<Eigen::Index>& indices) const;
  BinaryDataset head(Eigen::Index n) const;
  BinaryDataset tail(Eigen::Index n) const;
};

/// Canonical state index: bit i of the index is visible unit i.
std::uint64_t state_index(const Eigen::Ref<const Eigen::VectorXd>& bits);
Eigen::VectorXd state_bits(std::uint64_t index, int dim);

/// All 2^dim binary vectors as rows, in canonical index order.
Eigen::MatrixXd all_states(int dim);

}  // namespace flowrbm
