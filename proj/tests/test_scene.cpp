#include <doctest.h>

#include <cmath>
#include <set>

#include "sonogan/scene.hpp"
#include "support.hpp"

using namespace sonogan;

namespace {

Primitive sphere(Vec3 c, double r, TissueIndex t) {
  Primitive p;
  p.shape = PrimitiveShape::ellipsoid;
  p.center = c;
  p.radii = {r, r, r};
  p.tissue = t;
  return p;
}

PhantomSpec one(Primitive p) {
  PhantomSpec s;
  s.primitives = {p};
  return s;
}

ScanGeometry small_geometry() {
  ScanGeometry g;
  g.n_scanlines = 33;
  g.n_axial = 151;
  g.depth_m = 0.15;
  return g;
}

// Independent point-in-primitive evaluation in painter's order.
TissueIndex painter(const std::vector<Primitive>& prims, const Vec3& p) {
  TissueIndex label = 0;
  for (const auto& q : prims) {
    const Vec3 d = p - q.center;
    bool in = false;
    if (q.shape == PrimitiveShape::ellipsoid) {
      in = std::pow(d.x / q.radii.x, 2) + std::pow(d.y / q.radii.y, 2) +
               std::pow(d.z / q.radii.z, 2) <=
           1.0;
    } else if (q.shape == PrimitiveShape::cylinder) {
      const double t = d.dot(q.axis);
      const Vec3 radial = d - q.axis * t;
      in = std::abs(t) <= q.half_length && radial.norm() <= q.radius;
    } else {
      const Vec3 ri{q.radii.x - q.thickness, q.radii.y - q.thickness, q.radii.z - q.thickness};
      const bool outer = std::pow(d.x / q.radii.x, 2) + std::pow(d.y / q.radii.y, 2) +
                             std::pow(d.z / q.radii.z, 2) <=
                         1.0;
      const bool inner =
          std::pow(d.x / ri.x, 2) + std::pow(d.y / ri.y, 2) + std::pow(d.z / ri.z, 2) <= 1.0;
      in = outer && !inner;
    }
    if (in) label = q.tissue;
  }
  return label;
}

}  // namespace

TEST_CASE("build_phantom rejects empty and non-dense specs") {
  CHECK_THROWS_AS(build_phantom(PhantomSpec{}), std::invalid_argument);
  PhantomSpec gap = one(sphere({0, 0, 50}, 10, 2));
  CHECK_THROWS_WITH_AS(build_phantom(gap), doctest::Contains("missing 1"), std::invalid_argument);
  PhantomSpec bad = one(sphere({0, 0, 50}, -1, 1));
  CHECK_THROWS_AS(build_phantom(bad), std::invalid_argument);
}

TEST_CASE("query: containment and painter's order") {
  const Phantom3D single = build_phantom(one(sphere({0, 0, 100}, 20, 1)));
  CHECK(single.query({0, 0, 100}) == 1);
  CHECK(single.query({0, 0, 200}) == 0);
  CHECK(single.tissue_count() == 2);

  PhantomSpec two;
  two.primitives = {sphere({0, 0, 100}, 20, 1), sphere({15, 0, 100}, 20, 2)};
  const Phantom3D p = build_phantom(two);
  const Vec3 overlap{7.5, 0, 100};
  CHECK(p.query(overlap) == painter(two.primitives, overlap));
  CHECK(p.query(overlap) == 2);
  CHECK(p.query({-15, 0, 100}) == 1);
}

TEST_CASE("query matches the painter oracle on random scenes") {
  testing::Gen gen(21);
  for (int trial = 0; trial < 20; ++trial) {
    PhantomSpec spec;
    const int n = static_cast<int>(gen.integer(1, 3));
    for (int k = 0; k < n; ++k) {
      Primitive p;
      const int kind = static_cast<int>(gen.integer(0, 2));
      p.center = {gen.uniform(-40, 40), gen.uniform(-40, 40), gen.uniform(40, 120)};
      p.tissue = static_cast<TissueIndex>(k + 1);
      if (kind == 0) {
        p.shape = PrimitiveShape::ellipsoid;
        p.radii = {gen.uniform(10, 40), gen.uniform(10, 40), gen.uniform(10, 40)};
      } else if (kind == 1) {
        p.shape = PrimitiveShape::shell;
        p.radii = {gen.uniform(15, 40), gen.uniform(15, 40), gen.uniform(15, 40)};
        p.thickness = gen.uniform(2, 10);
      } else {
        p.shape = PrimitiveShape::cylinder;
        p.axis = Vec3{gen.normal(), gen.normal(), gen.normal()}.normalized();
        p.radius = gen.uniform(3, 15);
        p.half_length = gen.uniform(10, 60);
      }
      spec.primitives.push_back(p);
    }
    const Phantom3D ph = build_phantom(spec);
    ProbePose pose;
    pose.origin = {gen.uniform(-20, 20), gen.uniform(-20, 20), 0.0};
    ScanGeometry g;
    g.n_scanlines = 32;
    g.n_axial = 32;
    const FanTissueMap fan = slice_tissue_map(ph, pose, g);
    for (std::size_t j = 0; j < 32; ++j) {
      for (std::size_t i = 0; i < 32; ++i) {
        // Fan points rebuilt from the geometry definition.
        const double r_mm = g.probe_radius_m * 1000.0 + g.sample_depth_m(j) * 1000.0;
        const double th = -g.fov_rad() / 2.0 + g.fov_rad() * static_cast<double>(i) / 31.0;
        const Vec3 apex = pose.origin - Vec3{0, 0, 1} * (g.probe_radius_m * 1000.0);
        const Vec3 p = apex + Vec3{std::sin(th), 0.0, std::cos(th)} * r_mm;
        REQUIRE(fan.labels(j, i) == (ph.in_world(p) ? painter(spec.primitives, p) : 0));
      }
    }
  }
}

TEST_CASE("sample_probe_poses: counts, lattice, determinism, unit quaternions") {
  const Phantom3D ph = build_phantom(default_phantom_spec());
  CHECK(sample_probe_poses(ph, 1, 1, 1, 7).size() == 1);
  const auto poses = sample_probe_poses(ph, 3, 4, 2, 7);
  CHECK(poses.size() == 24);
  CHECK(poses == sample_probe_poses(ph, 3, 4, 2, 7));
  CHECK_FALSE(poses == sample_probe_poses(ph, 3, 4, 2, 8));
  for (const auto& p : poses) {
    CHECK(std::abs(p.orientation.norm() - 1.0) <= 1e-9);
    // On the surface: the origin is at the first non-background depth.
    CHECK(ph.query(p.origin + Vec3{0, 0, 0.6}) != 0);
  }
  // Lattice: orientations share their position; x takes 3 values, y 4.
  std::set<double> xs, ys;
  for (const auto& p : poses) {
    xs.insert(p.origin.x);
    ys.insert(p.origin.y);
  }
  CHECK(xs.size() == 3);
  CHECK(ys.size() == 4);
  CHECK(poses[0].origin == poses[1].origin);
  CHECK_THROWS_AS(sample_probe_poses(ph, 0, 1, 1, 7), std::invalid_argument);
}

TEST_CASE("slice_tissue_map: homogeneous, empty and sphere-run cases") {
  const ScanGeometry g = small_geometry();
  ProbePose pose;  // identity: depth along +z, lateral along +x

  PhantomSpec block = one(sphere({0, 0, 0}, 1e4, 1));
  block.world_extent = {1e4, 1e4, 1e4};
  ProbePose inside;
  inside.origin = {0, 0, 20};  // the fan edges start above the face of a convex probe
  const FanTissueMap all_one = slice_tissue_map(build_phantom(block), inside, g);
  for (auto v : all_one.labels.values()) REQUIRE(v == 1);

  const Phantom3D ph = build_phantom(one(sphere({0, 0, 60}, 10, 1)));
  ProbePose away;
  away.origin = {120, 120, 0};
  for (auto v : slice_tissue_map(ph, away, g).labels.values()) REQUIRE(v == 0);

  // Sphere of label 2 centred on the central scanline 5 cm deep.
  const double r = 12.0;
  PhantomSpec spec;
  spec.primitives = {sphere({0, 0, 200}, 5, 1), sphere({0, 0, 50}, r, 2)};
  const FanTissueMap fan = slice_tissue_map(build_phantom(spec), pose, g);
  const std::size_t centre = g.n_scanlines / 2;
  const double step_mm = g.axial_step_m() * 1000.0;
  std::size_t first = 0, last = 0, count = 0;
  for (std::size_t j = 0; j < g.n_axial; ++j) {
    // Ray-sphere oracle: the ray passes through the centre, so the chord is the diameter.
    const bool inside = std::abs(static_cast<double>(j) * step_mm - 50.0) <= r;
    CHECK((fan.labels(j, centre) == 2) == inside);
    if (fan.labels(j, centre) == 2) {
      if (count == 0) first = j;
      last = j;
      ++count;
    }
  }
  CHECK(count == last - first + 1);  // contiguous
  CHECK(static_cast<double>(count) * step_mm == doctest::Approx(2 * r).epsilon(0.05));
}

TEST_CASE("slice_tissue_map is deterministic and validates inputs") {
  const Phantom3D ph = build_phantom(default_phantom_spec());
  const auto poses = sample_probe_poses(ph, 2, 2, 1, 3);
  const ScanGeometry g = small_geometry();
  CHECK(slice_tissue_map(ph, poses[2], g).labels == slice_tissue_map(ph, poses[2], g).labels);
  ProbePose bad;
  bad.orientation = {2, 0, 0, 0};
  CHECK_THROWS_AS(slice_tissue_map(ph, bad, g), std::invalid_argument);
  ScanGeometry wide = g;
  wide.fov_deg = 360;
  CHECK_THROWS_AS(wide.validate(), std::invalid_argument);
}
