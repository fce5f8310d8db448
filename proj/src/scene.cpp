#include "sonogan/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

namespace sonogan {

double Vec3::norm() const { return std::sqrt(dot(*this)); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n == 0.0) throw std::invalid_argument("Vec3::normalized: zero vector");
  return *this * (1.0 / n);
}

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double radians) {
  const Vec3 u = axis.normalized();
  const double s = std::sin(radians / 2.0);
  return {std::cos(radians / 2.0), u.x * s, u.y * s, u.z * s};
}

Quaternion Quaternion::operator*(const Quaternion& o) const {
  return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
          w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Vec3 Quaternion::rotate(const Vec3& v) const {
  const Vec3 u{x, y, z};
  const Vec3 t = u.cross(v) * 2.0;
  return v + t * w + u.cross(t);
}

bool Primitive::contains(const Vec3& p) const {
  const Vec3 d = p - center;
  switch (shape) {
    case PrimitiveShape::ellipsoid: {
      const double q = (d.x * d.x) / (radii.x * radii.x) + (d.y * d.y) / (radii.y * radii.y) +
                       (d.z * d.z) / (radii.z * radii.z);
      return q <= 1.0;
    }
    case PrimitiveShape::shell: {
      const double q = (d.x * d.x) / (radii.x * radii.x) + (d.y * d.y) / (radii.y * radii.y) +
                       (d.z * d.z) / (radii.z * radii.z);
      if (q > 1.0) return false;
      const Vec3 inner{radii.x - thickness, radii.y - thickness, radii.z - thickness};
      const double qi = (d.x * d.x) / (inner.x * inner.x) + (d.y * d.y) / (inner.y * inner.y) +
                        (d.z * d.z) / (inner.z * inner.z);
      return qi > 1.0;
    }
    case PrimitiveShape::cylinder: {
      const double along = d.dot(axis);
      if (std::abs(along) > half_length) return false;
      const Vec3 radial = d - axis * along;
      return radial.dot(radial) <= radius * radius;
    }
  }
  return false;
}

bool Phantom3D::in_world(const Vec3& p) const {
  const Vec3& e = spec_.world_extent;
  return std::abs(p.x) <= e.x / 2.0 && std::abs(p.y) <= e.y / 2.0 && p.z >= 0.0 && p.z <= e.z;
}

TissueIndex Phantom3D::query(const Vec3& p) const {
  if (!in_world(p)) return 0;
  const auto& prims = spec_.primitives;
  for (auto it = prims.rbegin(); it != prims.rend(); ++it) {
    if (it->contains(p)) return it->tissue;
  }
  return 0;
}

Phantom3D build_phantom(const PhantomSpec& spec) {
  if (spec.primitives.empty()) throw std::invalid_argument("build_phantom: empty primitive list");
  const Vec3& e = spec.world_extent;
  if (!(e.x > 0.0 && e.y > 0.0 && e.z > 0.0)) {
    throw std::invalid_argument("build_phantom: world extent must be positive");
  }
  std::set<TissueIndex> used{0};
  for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
    const Primitive& p = spec.primitives[i];
    const std::string where = "build_phantom: primitive " + std::to_string(i);
    switch (p.shape) {
      case PrimitiveShape::ellipsoid:
        if (!(p.radii.x > 0 && p.radii.y > 0 && p.radii.z > 0)) {
          throw std::invalid_argument(where + " has non-positive radii");
        }
        break;
      case PrimitiveShape::shell:
        if (!(p.radii.x > 0 && p.radii.y > 0 && p.radii.z > 0) || !(p.thickness > 0) ||
            p.thickness >= std::min({p.radii.x, p.radii.y, p.radii.z})) {
          throw std::invalid_argument(where + " has invalid shell radii/thickness");
        }
        break;
      case PrimitiveShape::cylinder:
        if (!(p.radius > 0 && p.half_length > 0)) {
          throw std::invalid_argument(where + " has non-positive cylinder size");
        }
        if (std::abs(p.axis.norm() - 1.0) > 1e-9) {
          throw std::invalid_argument(where + " axis is not a unit vector");
        }
        break;
    }
    used.insert(p.tissue);
  }
  const TissueIndex max_label = *used.rbegin();
  if (used.size() != static_cast<std::size_t>(max_label) + 1) {
    for (TissueIndex t = 0; t <= max_label; ++t) {
      if (!used.contains(t)) {
        throw std::invalid_argument("build_phantom: tissue indices not dense, missing " +
                                    std::to_string(t));
      }
    }
  }
  Phantom3D out;
  out.spec_ = spec;
  out.tissue_count_ = static_cast<std::size_t>(max_label) + 1;
  return out;
}

PhantomSpec default_phantom_spec() {
  auto ellipsoid = [](Vec3 c, Vec3 r, TissueIndex t) {
    Primitive p;
    p.shape = PrimitiveShape::ellipsoid;
    p.center = c;
    p.radii = r;
    p.tissue = t;
    return p;
  };
  PhantomSpec spec;
  spec.world_extent = {560.0, 560.0, 440.0};
  // abdominal wall: skin 1, fat 2, muscle 3, uterine tissue 4
  spec.primitives.push_back(ellipsoid({0, 0, 220}, {260, 260, 220}, 1));
  spec.primitives.push_back(ellipsoid({0, 0, 220}, {257, 257, 217}, 2));
  spec.primitives.push_back(ellipsoid({0, 0, 220}, {245, 245, 205}, 3));
  spec.primitives.push_back(ellipsoid({0, 0, 220}, {235, 235, 195}, 4));
  // amniotic fluid 5
  spec.primitives.push_back(ellipsoid({0, 0, 85}, {120, 100, 55}, 5));
  // fetal torso 6 with ribs (bone 8)
  spec.primitives.push_back(ellipsoid({35, 0, 90}, {50, 32, 32}, 6));
  for (double x : {15.0, 32.0, 49.0, 66.0}) {
    Primitive rib;
    rib.shape = PrimitiveShape::cylinder;
    rib.center = {x, 0, 63};
    rib.axis = {0, 1, 0};
    rib.radius = 2.5;
    rib.half_length = 24.0;
    rib.tissue = 8;
    spec.primitives.push_back(rib);
  }
  // fetal head: brain 7 inside a skull shell (bone 8)
  spec.primitives.push_back(ellipsoid({-50, 0, 85}, {33, 30, 33}, 7));
  Primitive skull;
  skull.shape = PrimitiveShape::shell;
  skull.center = {-50, 0, 85};
  skull.radii = {36, 33, 36};
  skull.thickness = 3.5;
  skull.tissue = 8;
  spec.primitives.push_back(skull);
  return spec;
}

Vec3 ProbePose::lateral() const {
  const Vec3 lat = orientation.rotate({1, 0, 0});
  const Vec3 dep = orientation.rotate({0, 0, 1});
  return lat * std::cos(in_plane_rotation) - dep * std::sin(in_plane_rotation);
}

Vec3 ProbePose::depth() const {
  const Vec3 lat = orientation.rotate({1, 0, 0});
  const Vec3 dep = orientation.rotate({0, 0, 1});
  return lat * std::sin(in_plane_rotation) + dep * std::cos(in_plane_rotation);
}

void ScanGeometry::validate() const {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) {
    throw std::invalid_argument("ScanGeometry: fov_deg must lie in (0, 180)");
  }
  if (!(depth_m > 0.0)) throw std::invalid_argument("ScanGeometry: depth_m must be positive");
  if (!(probe_radius_m > 0.0)) {
    throw std::invalid_argument("ScanGeometry: probe_radius_m must be positive");
  }
  if (n_scanlines < 2 || n_axial < 2) {
    throw std::invalid_argument("ScanGeometry: need at least 2 scanlines and 2 axial samples");
  }
  if (cart_rows < 2 || cart_cols < 2) {
    throw std::invalid_argument("ScanGeometry: Cartesian size must be at least 2x2");
  }
  if (!(freq_mhz > 0.0)) throw std::invalid_argument("ScanGeometry: freq_mhz must be positive");
}

double ScanGeometry::fov_rad() const { return fov_deg * std::numbers::pi / 180.0; }

double ScanGeometry::scanline_angle(std::size_t i) const {
  return -fov_rad() / 2.0 + fov_rad() * static_cast<double>(i) / static_cast<double>(n_scanlines - 1);
}

namespace {

// First z (mm) below z = 0 where the column (x, y) enters a non-background label.
double surface_height(const Phantom3D& phantom, double x, double y) {
  const double zmax = phantom.spec().world_extent.z;
  constexpr double step = 0.5;
  double prev = 0.0;
  if (phantom.query({x, y, 0.0}) != 0) return 0.0;
  for (double z = step; z <= zmax; z += step) {
    if (phantom.query({x, y, z}) != 0) {
      double lo = prev;
      double hi = z;
      for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        (phantom.query({x, y, mid}) != 0 ? hi : lo) = mid;
      }
      return hi;
    }
    prev = z;
  }
  return 0.0;
}

}  // namespace

std::vector<ProbePose> sample_probe_poses(const Phantom3D& phantom, int grid_nx, int grid_ny,
                                          int orientations_per_pos, std::uint64_t seed) {
  if (grid_nx < 1 || grid_ny < 1 || orientations_per_pos < 1) {
    throw std::invalid_argument("sample_probe_poses: grid counts must be >= 1");
  }
  constexpr double kLatticeFraction = 0.15;
  constexpr double kMaxTilt = 20.0 * std::numbers::pi / 180.0;
  constexpr double kMaxInPlane = 10.0 * std::numbers::pi / 180.0;
  const Vec3& e = phantom.spec().world_extent;
  const double hx = kLatticeFraction * e.x;
  const double hy = kLatticeFraction * e.y;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ProbePose> poses;
  poses.reserve(static_cast<std::size_t>(grid_nx) * grid_ny * orientations_per_pos);
  for (int iy = 0; iy < grid_ny; ++iy) {
    for (int ix = 0; ix < grid_nx; ++ix) {
      const double x = grid_nx == 1 ? 0.0 : -hx + 2.0 * hx * ix / (grid_nx - 1);
      const double y = grid_ny == 1 ? 0.0 : -hy + 2.0 * hy * iy / (grid_ny - 1);
      const Vec3 origin{x, y, surface_height(phantom, x, y)};
      for (int o = 0; o < orientations_per_pos; ++o) {
        const double yaw = std::numbers::pi * unit(rng);
        const double tilt = kMaxTilt * unit(rng);
        const double tilt_dir = 2.0 * std::numbers::pi * unit(rng);
        const double in_plane = kMaxInPlane * (2.0 * unit(rng) - 1.0);
        const Quaternion q_yaw = Quaternion::from_axis_angle({0, 0, 1}, yaw);
        const Quaternion q_tilt = Quaternion::from_axis_angle(
            {std::cos(tilt_dir), std::sin(tilt_dir), 0.0}, tilt);
        ProbePose pose;
        pose.origin = origin;
        pose.orientation = q_tilt * q_yaw;
        pose.in_plane_rotation = in_plane;
        poses.push_back(pose);
      }
    }
  }
  return poses;
}

Vec3 fan_point(const ProbePose& pose, const ScanGeometry& geom, std::size_t scanline,
               std::size_t sample) {
  const double radius_mm = geom.probe_radius_m * 1000.0;
  const double r = radius_mm + geom.sample_depth_m(sample) * 1000.0;
  const double theta = geom.scanline_angle(scanline);
  const Vec3 lat = pose.lateral();
  const Vec3 dep = pose.depth();
  const Vec3 apex = pose.origin - dep * radius_mm;
  return apex + (lat * std::sin(theta) + dep * std::cos(theta)) * r;
}

FanTissueMap slice_tissue_map(const Phantom3D& phantom, const ProbePose& pose,
                              const ScanGeometry& geom) {
  geom.validate();
  if (std::abs(pose.orientation.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("slice_tissue_map: orientation is not a unit quaternion");
  }
  FanTissueMap out{geom, LabelImage(geom.n_axial, geom.n_scanlines)};
  for (std::size_t j = 0; j < geom.n_axial; ++j) {
    for (std::size_t i = 0; i < geom.n_scanlines; ++i) {
      out.labels(j, i) = phantom.query(fan_point(pose, geom, i, j));
    }
  }
  return out;
}

}  // namespace sonogan
