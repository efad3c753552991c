#include "pinn/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "pinn/rng.hpp"

namespace pinn {

Box::Box(std::vector<Axis> axes) : axes_(std::move(axes)) {
  for (const auto& a : axes_) {
    if (!(a.low < a.high)) throw std::invalid_argument("Box: axis '" + a.name + "' needs low < high");
  }
}

bool Box::contains(std::span<const double> p, double tol) const {
  if (p.size() != dim()) return false;
  for (std::size_t i = 0; i < dim(); ++i) {
    if (p[i] < axes_[i].low - tol || p[i] > axes_[i].high + tol) return false;
  }
  return true;
}

int Box::facet_of(std::span<const double> p, double tol) const {
  for (std::size_t i = 0; i < dim(); ++i) {
    if (std::abs(p[i] - axes_[i].low) <= tol) return static_cast<int>(2 * i);
    if (std::abs(p[i] - axes_[i].high) <= tol) return static_cast<int>(2 * i + 1);
  }
  return -1;
}

FacetMask FacetMask::all(const Box& box) {
  FacetMask m;
  for (std::size_t i = 0; i < box.dim(); ++i) m.add(i, 0).add(i, 1);
  return m;
}

FacetMask FacetMask::of(std::initializer_list<std::pair<std::size_t, int>> facets) {
  FacetMask m;
  for (auto [axis, side] : facets) m.add(axis, side);
  return m;
}

FacetMask& FacetMask::add(std::size_t axis, int side) {
  if (side != 0 && side != 1) throw std::invalid_argument("FacetMask: side must be 0 or 1");
  if (axis >= 16) throw std::invalid_argument("FacetMask: axis out of range");
  bits_ |= 1u << (2 * axis + static_cast<std::size_t>(side));
  return *this;
}

PointSet PointSet::restricted(FacetMask mask) const {
  PointSet out{box, sampler, seed, dim, {}, {}};
  for (std::size_t i = 0; i < facets.size(); ++i) {
    if (!mask.contains(facets[i])) continue;
    const auto p = point(i);
    out.coords.insert(out.coords.end(), p.begin(), p.end());
    out.facets.push_back(facets[i]);
  }
  return out;
}

namespace {

PointSet tensor_grid(const Box& box, std::span<const std::size_t> n, const std::string& tag,
                     const std::function<double(std::size_t axis, std::size_t k)>& coord) {
  if (n.size() != box.dim()) throw std::invalid_argument(tag + ": one count per axis required");
  PointSet out{box, tag, 0, box.dim(), {}, {}};
  const std::size_t total = std::accumulate(n.begin(), n.end(), std::size_t{1}, std::multiplies<>());
  out.coords.reserve(total * box.dim());
  std::vector<std::size_t> idx(box.dim(), 0);
  for (std::size_t p = 0; p < total; ++p) {
    for (std::size_t a = 0; a < box.dim(); ++a) out.coords.push_back(coord(a, idx[a]));
    // Last axis varies fastest.
    for (std::size_t a = box.dim(); a-- > 0;) {
      if (++idx[a] < n[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

}  // namespace

PointSet cartesian_grid(const Box& box, std::span<const std::size_t> n_per_axis) {
  for (auto n : n_per_axis) {
    if (n < 2) throw std::invalid_argument("cartesian_grid: need at least 2 points per axis");
  }
  return tensor_grid(box, n_per_axis, "cartesian_grid", [&](std::size_t a, std::size_t k) {
    const auto& ax = box.axis(a);
    if (k + 1 == n_per_axis[a]) return ax.high;
    return ax.low + (ax.high - ax.low) * static_cast<double>(k) / static_cast<double>(n_per_axis[a] - 1);
  });
}

PointSet interior_grid(const Box& box, std::span<const std::size_t> n_per_axis) {
  for (auto n : n_per_axis) {
    if (n < 1) throw std::invalid_argument("interior_grid: need at least 1 cell per axis");
  }
  return tensor_grid(box, n_per_axis, "interior_grid", [&](std::size_t a, std::size_t k) {
    const auto& ax = box.axis(a);
    return ax.low + (ax.high - ax.low) * (static_cast<double>(k) + 0.5) / static_cast<double>(n_per_axis[a]);
  });
}

PointSet parameter_grid(const Box& box, std::size_t n) {
  if (n == 0) throw std::invalid_argument("parameter_grid: need at least one sample");
  const auto counts = balanced_factors(n, box.dim());
  auto out = tensor_grid(box, counts, "parameter_grid", [&](std::size_t a, std::size_t k) {
    const auto& ax = box.axis(a);
    if (counts[a] == 1) return 0.5 * (ax.low + ax.high);
    if (k + 1 == counts[a]) return ax.high;
    return ax.low + (ax.high - ax.low) * static_cast<double>(k) / static_cast<double>(counts[a] - 1);
  });
  return out;
}

std::vector<std::size_t> balanced_factors(std::size_t n, std::size_t dims) {
  if (dims == 0) return {};
  if (dims == 1) return {n};
  const auto target = std::pow(static_cast<double>(n), 1.0 / static_cast<double>(dims));
  std::size_t best = 1;
  for (std::size_t d = 1; d <= n; ++d) {
    if (static_cast<double>(d) > target + 1e-9) break;
    if (n % d == 0) best = d;
  }
  auto rest = balanced_factors(n / best, dims - 1);
  rest.insert(rest.begin(), best);
  return rest;
}

PointSet latin_hypercube(const Box& box, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("latin_hypercube: n must be >= 1");
  PointSet out{box, "latin_hypercube", seed, box.dim(), std::vector<double>(n * box.dim()), {}};
  SplitMix64 rng(seed);
  std::vector<std::size_t> perm(n);
  for (std::size_t a = 0; a < box.dim(); ++a) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle(perm.begin(), perm.end(), rng);
    const auto& ax = box.axis(a);
    const double h = (ax.high - ax.low) / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      double x = ax.low + (static_cast<double>(perm[k]) + rng.uniform()) * h;
      // Rounding can land exactly on the upper stratum edge; keep it inside.
      const double upper = ax.low + static_cast<double>(perm[k] + 1) * h;
      if (x >= upper) x = std::nextafter(upper, ax.low);
      out.coords[k * box.dim() + a] = x;
    }
  }
  return out;
}

PointSet boundary_sample(const Box& box, std::size_t n, BoundaryMode mode, std::uint64_t seed, FacetMask facets) {
  if (facets.empty()) throw std::invalid_argument("boundary_sample: empty facet mask");
  if (n == 0) throw std::invalid_argument("boundary_sample: n must be >= 1");
  const std::size_t d = box.dim();

  std::vector<int> ids;
  std::vector<double> measure;
  for (std::size_t f = 0; f < 2 * d; ++f) {
    if (!facets.contains(static_cast<int>(f))) continue;
    double m = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      if (a != f / 2) m *= box.length(a);
    }
    ids.push_back(static_cast<int>(f));
    measure.push_back(m);
  }
  if (ids.empty()) throw std::invalid_argument("boundary_sample: facet mask selects no facet of this box");
  const double total = std::accumulate(measure.begin(), measure.end(), 0.0);

  PointSet out{box, mode == BoundaryMode::Equispaced ? "boundary_equispaced" : "boundary_uniform_random",
               seed, d, {}, {}};
  auto emit = [&](int facet, std::span<const double> free_coords) {
    const std::size_t fixed = static_cast<std::size_t>(facet) / 2;
    std::size_t k = 0;
    for (std::size_t a = 0; a < d; ++a) {
      if (a == fixed) {
        out.coords.push_back(facet % 2 == 0 ? box.axis(a).low : box.axis(a).high);
      } else {
        out.coords.push_back(free_coords[k++]);
      }
    }
    out.facets.push_back(facet);
  };

  if (mode == BoundaryMode::Equispaced) {
    if (d > 2) throw std::invalid_argument("boundary_sample: equispaced mode supports dimension <= 2");
    // Largest-remainder apportionment by facet measure.
    std::vector<std::size_t> count(ids.size());
    std::vector<std::pair<double, std::size_t>> remainder;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const double exact = static_cast<double>(n) * measure[i] / total;
      count[i] = static_cast<std::size_t>(std::floor(exact));
      assigned += count[i];
      remainder.emplace_back(-(exact - std::floor(exact)), i);
    }
    std::stable_sort(remainder.begin(), remainder.end());
    for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++count[remainder[r % remainder.size()].second];

    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t fixed = static_cast<std::size_t>(ids[i]) / 2;
      for (std::size_t k = 0; k < count[i]; ++k) {
        std::vector<double> free;
        if (d == 2) {
          const auto& ax = box.axis(1 - fixed);
          free.push_back(ax.low + (ax.high - ax.low) * (static_cast<double>(k) + 0.5) /
                                      static_cast<double>(count[i]));
        }
        emit(ids[i], free);
      }
    }
    return out;
  }

  SplitMix64 rng(seed);
  for (std::size_t k = 0; k < n; ++k) {
    double u = rng.uniform() * total;
    std::size_t i = 0;
    while (i + 1 < ids.size() && u >= measure[i]) {
      u -= measure[i];
      ++i;
    }
    const std::size_t fixed = static_cast<std::size_t>(ids[i]) / 2;
    std::vector<double> free;
    for (std::size_t a = 0; a < d; ++a) {
      if (a != fixed) free.push_back(rng.uniform(box.axis(a).low, box.axis(a).high));
    }
    emit(ids[i], free);
  }
  return out;
}

void write_csv(std::ostream& os, const PointSet& points) {
  for (std::size_t a = 0; a < points.dim; ++a) os << (a ? "," : "") << points.box.axis(a).name;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto p = points.point(i);
    for (std::size_t a = 0; a < p.size(); ++a) {
      std::snprintf(buf, sizeof buf, "%.17g", p[a]);
      os << (a ? "," : "") << buf;
    }
    os << '\n';
  }
}

}  // namespace pinn
