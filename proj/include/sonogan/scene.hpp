#pragma once

// Analytic phantom scenes, probe poses and fan-shaped tissue slices.
//
// World coordinates are millimetres with z pointing into the body; the
// phantom occupies x in [-ex/2, ex/2], y in [-ey/2, ey/2], z in [0, ez].

#include <cstdint>
#include <vector>

#include "sonogan/grid.hpp"

namespace sonogan {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
  Vec3 normalized() const;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion from_axis_angle(const Vec3& axis, double radians);
  Quaternion operator*(const Quaternion& o) const;
  double norm() const;
  Vec3 rotate(const Vec3& v) const;
  friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

using TissueIndex = std::uint16_t;

enum class PrimitiveShape { ellipsoid, cylinder, shell };

// One analytic solid.
//   ellipsoid: axis-aligned, semi-axes `radii`.
//   shell:     ellipsoid with semi-axes `radii` minus the one with `radii - thickness`.
//   cylinder:  finite circular cylinder along unit `axis`, `radius`, `half_length`.
struct Primitive {
  PrimitiveShape shape = PrimitiveShape::ellipsoid;
  Vec3 center;
  Vec3 radii;
  double thickness = 0.0;
  Vec3 axis{0.0, 1.0, 0.0};
  double radius = 0.0;
  double half_length = 0.0;
  TissueIndex tissue = 0;

  bool contains(const Vec3& p) const;
};

struct PhantomSpec {
  std::vector<Primitive> primitives;  // painter's order: later wins
  Vec3 world_extent{300.0, 300.0, 250.0};
  std::uint64_t seed = 0;
};

class Phantom3D {
 public:
  TissueIndex query(const Vec3& p) const;
  // Number of tissue classes T (labels are 0..T-1, 0 = coupling medium).
  std::size_t tissue_count() const { return tissue_count_; }
  const PhantomSpec& spec() const { return spec_; }
  bool in_world(const Vec3& p) const;

 private:
  friend Phantom3D build_phantom(const PhantomSpec& spec);
  PhantomSpec spec_;
  std::size_t tissue_count_ = 1;
};

// Validates the spec (non-empty, dense tissue labels, positive sizes).
Phantom3D build_phantom(const PhantomSpec& spec);

// Layered abdominal wall over an amniotic cavity holding a fetus with a skull
// shell and ribs. Tissue labels match default_tissue_table().
PhantomSpec default_phantom_spec();

struct ProbePose {
  Vec3 origin;               // centre of the transducer face, mm
  Quaternion orientation;    // maps probe axes (lateral, elevation, depth) to world
  double in_plane_rotation = 0.0;  // steering of the fan about the elevation axis, rad

  // Unit vectors of the imaging frame after in-plane rotation.
  Vec3 lateral() const;
  Vec3 depth() const;
  friend bool operator==(const ProbePose&, const ProbePose&) = default;
};

struct ScanGeometry {
  double fov_deg = 70.0;
  double depth_m = 0.15;
  double probe_radius_m = 0.06;
  std::size_t n_scanlines = 128;
  std::size_t n_axial = 256;
  std::size_t cart_rows = 256;
  std::size_t cart_cols = 256;
  double freq_mhz = 8.0;

  void validate() const;
  double fov_rad() const;
  double axial_step_m() const { return depth_m / static_cast<double>(n_axial - 1); }
  // Beam angle of scanline i, measured from the probe axis.
  double scanline_angle(std::size_t i) const;
  // Depth below the transducer face of axial sample j.
  double sample_depth_m(std::size_t j) const { return static_cast<double>(j) * axial_step_m(); }
  friend bool operator==(const ScanGeometry&, const ScanGeometry&) = default;
};

// Labels in fan coordinates: rows = axial samples, cols = scanlines.
struct FanTissueMap {
  ScanGeometry geometry;
  LabelImage labels;
};

// nx * ny * orientations poses on a regular lattice over the phantom's top
// surface, each orientation a seeded tilt of the imaging plane.
std::vector<ProbePose> sample_probe_poses(const Phantom3D& phantom, int grid_nx, int grid_ny,
                                          int orientations_per_pos, std::uint64_t seed);

FanTissueMap slice_tissue_map(const Phantom3D& phantom, const ProbePose& pose,
                              const ScanGeometry& geom);

// World position of axial sample j on scanline i.
Vec3 fan_point(const ProbePose& pose, const ScanGeometry& geom, std::size_t scanline,
               std::size_t sample);

}  // namespace sonogan
