#pragma once

// Globally adaptive Gauss-Kronrod (7/15) integration of complex integrands.
// Panels are bisected in order of decreasing error estimate until the summed
// estimate falls below rel_tol times the magnitude of the running total. A
// purely per-panel tolerance is unsuitable here: far-out spectral panels carry
// integrands at the cancellation-noise level and would refine forever.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "skinperm/error.hpp"

namespace skinperm::quad {

using cdouble = std::complex<double>;

namespace detail {
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for nodes 1, 3, 5, 7 of the Kronrod set
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double lo, hi;
  cdouble value;
  double error;
  unsigned depth;
  std::size_t order; // creation order, breaks ties deterministically
};

struct WorseFirst {
  bool operator()(const Panel& x, const Panel& y) const {
    if (x.error != y.error) return x.error < y.error;
    return x.order > y.order;
  }
};

template <class F>
Panel kronrod_panel(F& f, double lo, double hi, unsigned depth, std::size_t order) {
  const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  const cdouble center = f(mid);
  cdouble kronrod = center * kKronrodWeights[7];
  cdouble gauss = center * kGaussWeights[3];
  for (std::size_t i = 0; i < 7; ++i) {
    const double dx = half * kKronrodNodes[i];
    const cdouble sum = f(mid - dx) + f(mid + dx);
    kronrod += kKronrodWeights[i] * sum;
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * sum;
  }
  return {lo, hi, kronrod * half, std::abs((kronrod - gauss) * half), depth, order};
}
} // namespace detail

struct Result {
  cdouble value;
  double error = 0.0;
  std::size_t evaluations = 0;
  bool converged = true;
};

/// Integrates f over consecutive panels [edges[i], edges[i+1]]. Bisection
/// depth of any panel is capped at max_depth; hitting the cap with the
/// tolerance unmet returns converged = false with the best estimate.
template <class F>
Result integrate(F&& f, std::span<const double> edges, double rel_tol, unsigned max_depth,
                 double abs_tol = 0.0) {
  using detail::Panel;
  Result out;
  if (edges.size() < 2) return out;

  std::size_t order = 0;
  std::priority_queue<Panel, std::vector<Panel>, detail::WorseFirst> heap;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    if (!(edges[i] < edges[i + 1])) continue;
    Panel p = detail::kronrod_panel(f, edges[i], edges[i + 1], 0, order++);
    out.value += p.value;
    out.error += p.error;
    heap.push(p);
  }
  out.evaluations = 15 * order;

  while (!heap.empty() && out.error > std::max(rel_tol * std::abs(out.value), abs_tol)) {
    Panel worst = heap.top();
    if (worst.depth >= max_depth) {
      out.converged = false;
      break;
    }
    heap.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    Panel left = detail::kronrod_panel(f, worst.lo, mid, worst.depth + 1, order++);
    Panel right = detail::kronrod_panel(f, mid, worst.hi, worst.depth + 1, order++);
    out.evaluations += 30;
    out.value += left.value + right.value - worst.value;
    out.error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }

  // re-sum to remove drift from the incremental updates
  cdouble total{};
  double error = 0.0;
  std::vector<Panel> panels;
  panels.reserve(heap.size());
  while (!heap.empty()) {
    panels.push_back(heap.top());
    heap.pop();
  }
  std::sort(panels.begin(), panels.end(), [](const Panel& x, const Panel& y) { return x.lo < y.lo; });
  for (const Panel& p : panels) {
    total += p.value;
    error += p.error;
  }
  out.value = total;
  out.error = error;
  return out;
}

template <class F>
Result integrate(F&& f, double lo, double hi, double rel_tol, unsigned max_depth, double abs_tol = 0.0) {
  const std::array<double, 2> edges{lo, hi};
  return integrate(std::forward<F>(f), std::span<const double>(edges), rel_tol, max_depth, abs_tol);
}

} // namespace skinperm::quad
