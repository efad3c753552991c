#pragma once
/**
 * @file sampling.hpp
 * @brief Collocation point generation over axis-aligned boxes.
 */

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pinn {

enum class AxisKind { Spatial, Temporal, Parametric };

struct Axis {
  std::string name;
  double low = 0.0;
  double high = 1.0;
  AxisKind kind = AxisKind::Spatial;
};

class Box {
 public:
  Box() = default;
  explicit Box(std::vector<Axis> axes);

  std::size_t dim() const { return axes_.size(); }
  bool empty() const { return axes_.empty(); }
  const Axis& axis(std::size_t i) const { return axes_.at(i); }
  const std::vector<Axis>& axes() const { return axes_; }
  double length(std::size_t i) const { return axes_.at(i).high - axes_.at(i).low; }

  bool contains(std::span<const double> p, double tol = 0.0) const;
  /// Facet id 2*axis + side (side 0 = low, 1 = high), or -1 if p is on no facet.
  int facet_of(std::span<const double> p, double tol = 1e-12) const;

 private:
  std::vector<Axis> axes_;
};

/// Set of boundary facets: bit 2*axis + side.
class FacetMask {
 public:
  FacetMask() = default;
  static FacetMask all(const Box& box);
  static FacetMask of(std::initializer_list<std::pair<std::size_t, int>> facets);

  FacetMask& add(std::size_t axis, int side);
  bool contains(int facet) const { return facet >= 0 && ((bits_ >> facet) & 1u) != 0; }
  bool empty() const { return bits_ == 0; }
  std::uint32_t bits() const { return bits_; }
  FacetMask operator|(FacetMask o) const { return FacetMask(bits_ | o.bits_); }
  friend bool operator==(FacetMask, FacetMask) = default;

 private:
  explicit FacetMask(std::uint32_t bits) : bits_(bits) {}
  std::uint32_t bits_ = 0;
};

struct PointSet {
  Box box;
  std::string sampler;
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  std::vector<double> coords;  // row-major, size() * dim
  std::vector<int> facets;     // boundary sets only: facet id per point

  std::size_t size() const { return dim == 0 ? 0 : coords.size() / dim; }
  std::span<const double> point(std::size_t i) const { return {coords.data() + i * dim, dim}; }
  /// Points lying on any facet in `mask` (boundary sets only).
  PointSet restricted(FacetMask mask) const;
};

/// Tensor grid with endpoints; n_per_axis[i] >= 2.
PointSet cartesian_grid(const Box& box, std::span<const std::size_t> n_per_axis);

/// Cell-centred tensor grid: n cells per axis, points at cell midpoints, so no
/// point touches the boundary.
PointSet interior_grid(const Box& box, std::span<const std::size_t> n_per_axis);

/// Exactly one point per axis stratum [low + k h, low + (k+1) h), h = length / n.
PointSet latin_hypercube(const Box& box, std::size_t n, std::uint64_t seed);

/// Endpoint grid with `n` points total, split over the axes as evenly as the
/// factorization of n allows (40 -> 5 x 8 in 2D). Used for parameter samples.
PointSet parameter_grid(const Box& box, std::size_t n);

enum class BoundaryMode { Equispaced, UniformRandom };

/**
 * Points on the selected facets. Equispaced mode splits n proportionally to
 * facet measure (largest remainder) and places cell-centred points along each
 * facet, so corners are never duplicated. Equispaced mode supports boxes of
 * dimension <= 2.
 */
PointSet boundary_sample(const Box& box, std::size_t n, BoundaryMode mode, std::uint64_t seed, FacetMask facets);

/// Splits n into per-axis counts whose product is n, as even as possible.
std::vector<std::size_t> balanced_factors(std::size_t n, std::size_t dims);

/// Header is the axis names, then one row per point.
void write_csv(std::ostream& os, const PointSet& points);

}  // namespace pinn
