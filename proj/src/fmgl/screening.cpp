#include "fmgl/screening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fmgl {

BlockPartition::BlockPartition(int p, std::vector<std::vector<int>> blocks)
    : dim_(p), blocks_(std::move(blocks)) {
  if (p < 1) throw StructuralError("partition: p must be positive");
  std::vector<char> seen(static_cast<std::size_t>(p), 0);
  int covered = 0;
  for (auto& block : blocks_) {
    if (block.empty()) throw StructuralError("partition: empty block");
    std::sort(block.begin(), block.end());
    for (int idx : block) {
      if (idx < 0 || idx >= p)
        throw StructuralError("partition: index " + std::to_string(idx) + " out of range");
      if (seen[static_cast<std::size_t>(idx)])
        throw StructuralError("partition: index " + std::to_string(idx) + " repeated");
      seen[static_cast<std::size_t>(idx)] = 1;
      ++covered;
    }
  }
  if (covered != p) throw StructuralError("partition: blocks do not cover all features");
  std::sort(blocks_.begin(), blocks_.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
}

int BlockPartition::max_block_size() const {
  std::size_t m = 0;
  for (const auto& b : blocks_) m = std::max(m, b.size());
  return static_cast<int>(m);
}

std::vector<int> BlockPartition::labels() const {
  std::vector<int> out(static_cast<std::size_t>(dim_), -1);
  for (std::size_t l = 0; l < blocks_.size(); ++l)
    for (int idx : blocks_[l]) out[static_cast<std::size_t>(idx)] = static_cast<int>(l);
  return out;
}

AdjacencyMatrix::AdjacencyMatrix(int p)
    : dim_(p), entries_(static_cast<std::size_t>(p) * static_cast<std::size_t>(p), 0) {
  if (p < 1) throw StructuralError("adjacency: p must be positive");
  for (int i = 0; i < p; ++i) entries_[static_cast<std::size_t>(i) * static_cast<std::size_t>(p + 1)] = 1;
}

void AdjacencyMatrix::set(int i, int j, bool connected) {
  if (i < 0 || j < 0 || i >= dim_ || j >= dim_)
    throw StructuralError("adjacency: index out of range");
  if (i == j) return;
  const auto p = static_cast<std::size_t>(dim_);
  entries_[static_cast<std::size_t>(i) * p + static_cast<std::size_t>(j)] = connected;
  entries_[static_cast<std::size_t>(j) * p + static_cast<std::size_t>(i)] = connected;
}

long AdjacencyMatrix::edge_count() const {
  long count = 0;
  for (int i = 0; i < dim_; ++i)
    for (int j = i + 1; j < dim_; ++j) count += (*this)(i, j) ? 1 : 0;
  return count;
}

namespace {

inline bool within(double value, double bound, Comparison cmp) {
  return cmp == Comparison::strict ? std::abs(value) < bound : std::abs(value) <= bound;
}

}  // namespace

bool pair_is_screenable(std::span<const double> s_vec, const PenaltyParams& params,
                        Comparison cmp) {
  const int kk = static_cast<int>(s_vec.size());
  if (kk < 1) throw StructuralError("screening: empty entry vector");
  const double l1 = params.lambda1();
  const double l2 = params.lambda2();

  // prefix[t] = s_1 + ... + s_t; K is small so a stack buffer would do, but
  // the vector keeps the code free of size limits.
  std::vector<double> prefix(static_cast<std::size_t>(kk) + 1, 0.0);
  for (int k = 0; k < kk; ++k)
    prefix[static_cast<std::size_t>(k) + 1] = prefix[static_cast<std::size_t>(k)] + s_vec[static_cast<std::size_t>(k)];
  auto window = [&](int start, int len) {  // 0-based start
    return prefix[static_cast<std::size_t>(start + len)] - prefix[static_cast<std::size_t>(start)];
  };

  for (int t = 1; t <= kk - 1; ++t) {
    const double edge_bound = t * l1 + l2;
    if (!within(window(0, t), edge_bound, cmp)) return false;
    if (!within(window(kk - t, t), edge_bound, cmp)) return false;
    const double interior_bound = t * l1 + 2.0 * l2;
    // 1-based starts r = 2..K-t, i.e. windows touching neither end.
    for (int r = 2; r <= kk - t; ++r)
      if (!within(window(r - 1, t), interior_bound, cmp)) return false;
  }
  return within(window(0, kk), kk * l1, cmp);
}

bool segment_dual_check(std::span<const double> s_vec, const PenaltyParams& params) {
  const std::size_t n = s_vec.size();
  for (std::size_t start = 0; start < n; ++start) {
    double sum = 0.0;
    for (std::size_t end = start; end < n; ++end) {
      sum += s_vec[end];
      const double len = static_cast<double>(end - start + 1);
      const double jumps = (start > 0 ? 1.0 : 0.0) + (end + 1 < n ? 1.0 : 0.0);
      const double cost = params.lambda1() * len + params.lambda2() * jumps;
      // d with +1 on the segment, then with -1.
      if (sum - cost > 0.0) return false;
      if (-sum - cost > 0.0) return false;
    }
  }
  return true;
}

AdjacencyMatrix build_adjacency(const CovarianceSet& s, const PenaltyParams& params) {
  const int p = s.dim();
  const int kk = s.count();
  AdjacencyMatrix adj(p);
  std::vector<double> s_vec(static_cast<std::size_t>(kk));
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < j; ++i) {
      for (int k = 0; k < kk; ++k) s_vec[static_cast<std::size_t>(k)] = s[k](i, j);
      if (!pair_is_screenable(s_vec, params)) adj.set(i, j, true);
    }
  }
  return adj;
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& px = parent_[static_cast<std::size_t>(x)];
      px = parent_[static_cast<std::size_t>(px)];
      x = px;
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // Smaller root wins so the representative is the block minimum.
    if (a < b)
      parent_[static_cast<std::size_t>(b)] = a;
    else
      parent_[static_cast<std::size_t>(a)] = b;
  }

 private:
  std::vector<int> parent_;
};

}  // namespace

BlockPartition connected_components(const AdjacencyMatrix& adj) {
  const int p = adj.dim();
  DisjointSets sets(p);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j)
      if (adj(i, j)) sets.unite(i, j);
  std::vector<std::vector<int>> by_root(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) by_root[static_cast<std::size_t>(sets.find(i))].push_back(i);
  std::vector<std::vector<int>> blocks;
  for (auto& b : by_root)
    if (!b.empty()) blocks.push_back(std::move(b));
  return BlockPartition(p, std::move(blocks));
}

CovarianceSet extract_block(const CovarianceSet& s, std::span<const int> block) {
  if (block.empty()) throw StructuralError("extract_block: empty block");
  std::vector<int> idx(block.begin(), block.end());
  std::sort(idx.begin(), idx.end());
  for (int v : idx)
    if (v < 0 || v >= s.dim())
      throw StructuralError("extract_block: index " + std::to_string(v) + " out of range");
  if (std::adjacent_find(idx.begin(), idx.end()) != idx.end())
    throw StructuralError("extract_block: repeated index");
  const auto b = static_cast<Eigen::Index>(idx.size());
  MatrixSet out;
  out.reserve(static_cast<std::size_t>(s.count()));
  for (int k = 0; k < s.count(); ++k) {
    Matrix sub(b, b);
    for (Eigen::Index c = 0; c < b; ++c)
      for (Eigen::Index r = 0; r < b; ++r)
        sub(r, c) = s[k](idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
    out.push_back(std::move(sub));
  }
  return CovarianceSet(std::move(out), s.sample_count());
}

PrecisionSet assemble_solution(const std::vector<PrecisionSet>& block_solutions,
                               const BlockPartition& partition) {
  if (static_cast<int>(block_solutions.size()) != partition.size())
    throw StructuralError("assemble_solution: block count mismatch");
  if (block_solutions.empty()) throw StructuralError("assemble_solution: no blocks");
  const int kk = block_solutions.front().count();
  const int p = partition.dim();
  MatrixSet out(static_cast<std::size_t>(kk), Matrix::Zero(p, p));
  for (int l = 0; l < partition.size(); ++l) {
    const auto& block = partition[l];
    const PrecisionSet& sol = block_solutions[static_cast<std::size_t>(l)];
    if (sol.count() != kk || sol.dim() != static_cast<int>(block.size())) {
      std::ostringstream os;
      os << "assemble_solution: block " << l << " has " << sol.count() << " x "
         << sol.dim() << ", expected " << kk << " x " << block.size();
      throw StructuralError(os.str());
    }
    for (int k = 0; k < kk; ++k)
      for (std::size_t c = 0; c < block.size(); ++c)
        for (std::size_t r = 0; r < block.size(); ++r)
          out[static_cast<std::size_t>(k)](block[r], block[c]) =
              sol[k](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  return PrecisionSet(std::move(out));
}

BlockPartition screen(const CovarianceSet& s, const PenaltyParams& params) {
  return connected_components(build_adjacency(s, params));
}

}  // namespace fmgl
