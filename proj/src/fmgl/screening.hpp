#pragma once

#include <span>
#include <vector>

#include "fmgl/core.hpp"

namespace fmgl {

/// Disjoint feature index sets covering {0..p-1}; each block sorted ascending,
/// blocks ordered by their smallest member.
class BlockPartition {
 public:
  BlockPartition(int p, std::vector<std::vector<int>> blocks);

  int dim() const noexcept { return dim_; }
  int size() const noexcept { return static_cast<int>(blocks_.size()); }
  const std::vector<int>& operator[](int l) const { return blocks_[static_cast<std::size_t>(l)]; }
  const std::vector<std::vector<int>>& blocks() const noexcept { return blocks_; }
  int max_block_size() const;
  /// Block index of each feature.
  std::vector<int> labels() const;

 private:
  int dim_;
  std::vector<std::vector<int>> blocks_;
};

/// Symmetric boolean p x p pattern with a true diagonal.
class AdjacencyMatrix {
 public:
  explicit AdjacencyMatrix(int p);

  int dim() const noexcept { return dim_; }
  bool operator()(int i, int j) const {
    return entries_[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim_) +
                    static_cast<std::size_t>(j)] != 0;
  }
  /// Sets E_ij = E_ji; diagonal entries cannot be cleared.
  void set(int i, int j, bool connected);
  long edge_count() const;  // off-diagonal pairs i < j

 private:
  int dim_;
  std::vector<unsigned char> entries_;
};

enum class Comparison { non_strict, strict };

/// Window-sum conditions under which an off-diagonal entry (i, j) is forced to
/// zero in every graph: with prefix sums over s_vec = (S^1_ij, ..., S^K_ij),
///   |prefix of length t|                <= t lambda1 + lambda2,
///   |interior window of length t|       <= t lambda1 + 2 lambda2,
///   |suffix of length t|                <= t lambda1 + lambda2,   t = 1..K-1,
///   |full sum|                          <= K lambda1.
/// Comparison::strict replaces <= by < (used by the shrinking rule).
bool pair_is_screenable(std::span<const double> s_vec, const PenaltyParams& params,
                        Comparison cmp = Comparison::non_strict);

/// Independent encoding of the same predicate: f(d) <= 0 for every
/// d = +-(0..0,1..1,0..0), where
///   f(d) = s^T d - lambda1 ||d||_1 - lambda2 sum |d_k - d_{k+1}|.
bool segment_dual_check(std::span<const double> s_vec, const PenaltyParams& params);

AdjacencyMatrix build_adjacency(const CovarianceSet& s, const PenaltyParams& params);

BlockPartition connected_components(const AdjacencyMatrix& adj);

CovarianceSet extract_block(const CovarianceSet& s, std::span<const int> block);

PrecisionSet assemble_solution(const std::vector<PrecisionSet>& block_solutions,
                               const BlockPartition& partition);

/// connected_components(build_adjacency(s, params)).
BlockPartition screen(const CovarianceSet& s, const PenaltyParams& params);

}  // namespace fmgl
