#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdenas {

/// Concordance of two rankings over the same items. Pairs tied in either list
/// count toward neither P nor Q.
struct RankStats {
  std::uint64_t concordant = 0;
  std::uint64_t discordant = 0;
  double tau = 0.0;
  double p_tau = 0.0;
};

inline RankStats make_rank_stats(std::uint64_t concordant, std::uint64_t discordant) {
  if (concordant + discordant == 0) {
    throw std::invalid_argument("kendall tau undefined: every pair is tied");
  }
  RankStats s{concordant, discordant, 0.0, 0.0};
  s.tau = (static_cast<double>(concordant) - static_cast<double>(discordant)) /
          static_cast<double>(concordant + discordant);
  s.p_tau = (s.tau + 1.0) / 2.0;
  return s;
}

namespace detail {
inline void check_rank_inputs(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("rankings differ in length");
  if (a.size() < 2) throw std::invalid_argument("kendall tau needs at least two items");
}
}  // namespace detail

/// Kendall's tau = (P - Q) / (P + Q) by enumerating every pair.
inline RankStats kendall_tau(std::span<const double> a, std::span<const double> b) {
  detail::check_rank_inputs(a, b);
  std::uint64_t p = 0, q = 0;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double s = (a[i] - a[j]) * (b[i] - b[j]);
      if (s > 0) ++p;
      else if (s < 0) ++q;
    }
  }
  return make_rank_stats(p, q);
}

/// O(m log m) variant (Knight's algorithm) with the same tie handling.
inline RankStats kendall_tau_fast(std::span<const double> a, std::span<const double> b) {
  detail::check_rank_inputs(a, b);
  const std::size_t m = a.size();
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
    return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]);
  });

  auto tied_pairs = [](std::uint64_t run) { return run * (run - 1) / 2; };
  std::uint64_t ties_a = 0, ties_ab = 0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j < m && a[idx[j]] == a[idx[i]]) ++j;
    ties_a += tied_pairs(j - i);
    for (std::size_t k = i; k < j;) {
      std::size_t l = k;
      while (l < j && b[idx[l]] == b[idx[k]]) ++l;
      ties_ab += tied_pairs(l - k);
      k = l;
    }
    i = j;
  }

  // Strict inversions of b in a-order (pairs tied in a are already b-sorted).
  std::vector<double> seq(m), buf(m);
  for (std::size_t i = 0; i < m; ++i) seq[i] = b[idx[i]];
  std::uint64_t inversions = 0;
  for (std::size_t width = 1; width < m; width *= 2) {
    for (std::size_t lo = 0; lo < m; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, m), hi = std::min(lo + 2 * width, m);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (seq[j] < seq[i]) {
          inversions += mid - i;
          buf[k++] = seq[j++];
        } else {
          buf[k++] = seq[i++];
        }
      }
      while (i < mid) buf[k++] = seq[i++];
      while (j < hi) buf[k++] = seq[j++];
    }
    seq.swap(buf);
  }

  std::uint64_t ties_b = 0;
  for (std::size_t i = 0; i < m;) {  // seq is now b sorted
    std::size_t j = i;
    while (j < m && seq[j] == seq[i]) ++j;
    ties_b += tied_pairs(j - i);
    i = j;
  }

  const std::uint64_t total = tied_pairs(m);
  const std::uint64_t untied = total - ties_a - ties_b + ties_ab;
  return make_rank_stats(untied - inversions, inversions);
}

/// Per-epoch tau of a cohort's ranking against its final-epoch ranking.
struct TauTrace {
  std::vector<double> tau;
  std::vector<double> p_tau;
  std::size_t cohort_size = 0;

  std::size_t size() const noexcept { return tau.size(); }
};

/// Rows are epochs, columns are architectures.
using ScoreMatrix = std::vector<std::vector<double>>;

inline TauTrace tau_trace(const ScoreMatrix& scores) {
  if (scores.size() < 2) throw std::invalid_argument("tau trace needs at least two epochs");
  const auto& final_scores = scores.back();
  TauTrace trace;
  trace.cohort_size = final_scores.size();
  for (const auto& row : scores) {
    if (row.size() != final_scores.size()) throw std::invalid_argument("score matrix is ragged");
    auto s = kendall_tau(row, final_scores);
    trace.tau.push_back(s.tau);
    trace.p_tau.push_back(s.p_tau);
  }
  return trace;
}

/// Mean tau; the final entry is a self-comparison and is skipped by default.
inline double mean_tau(const TauTrace& trace, bool exclude_final = true) {
  const std::size_t n = exclude_final ? trace.size() - std::min<std::size_t>(trace.size(), 1) : trace.size();
  if (n == 0) throw std::invalid_argument("mean_tau needs at least one epoch to average");
  return std::accumulate(trace.tau.begin(), trace.tau.begin() + static_cast<std::ptrdiff_t>(n), 0.0) /
         static_cast<double>(n);
}

/// Least-squares slope of tau against epoch index.
inline double trend_slope(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("trend needs at least two points");
  const double xm = (static_cast<double>(n) - 1.0) / 2.0;
  const double ym = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - xm;
    sxy += dx * (values[i] - ym);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace mdenas
