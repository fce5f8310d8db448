#include "sonogan/serialize.hpp"

#include <stdexcept>
#include <string>

namespace sonogan {

void require_known_keys(const Json& j, std::initializer_list<const char*> allowed,
                        const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || item.key() == k;
    if (!ok) throw std::invalid_argument(std::string(what) + ": unknown key '" + item.key() + "'");
  }
}

namespace {

template <typename V>
void read_opt(const Json& j, const char* key, V& out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

}  // namespace

void to_json(Json& j, const Vec3& v) { j = Json::array({v.x, v.y, v.z}); }

void from_json(const Json& j, Vec3& v) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("vec3: expected [x, y, z]");
  v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(Json& j, const Quaternion& q) { j = Json::array({q.w, q.x, q.y, q.z}); }

void from_json(const Json& j, Quaternion& q) {
  if (!j.is_array() || j.size() != 4) {
    throw std::invalid_argument("quaternion: expected [w, x, y, z]");
  }
  q = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

namespace {

const char* shape_name(PrimitiveShape s) {
  switch (s) {
    case PrimitiveShape::ellipsoid: return "ellipsoid";
    case PrimitiveShape::cylinder: return "cylinder";
    case PrimitiveShape::shell: return "shell";
  }
  return "?";
}

PrimitiveShape parse_shape(const std::string& s) {
  if (s == "ellipsoid") return PrimitiveShape::ellipsoid;
  if (s == "cylinder") return PrimitiveShape::cylinder;
  if (s == "shell") return PrimitiveShape::shell;
  throw std::invalid_argument("primitive: unknown shape '" + s +
                              "' (ellipsoid, cylinder, shell)");
}

}  // namespace

// Only the fields a shape uses are written.
void to_json(Json& j, const Primitive& p) {
  j = Json{{"shape", shape_name(p.shape)}, {"center", p.center}, {"tissue", p.tissue}};
  switch (p.shape) {
    case PrimitiveShape::shell:
      j["thickness"] = p.thickness;
      [[fallthrough]];
    case PrimitiveShape::ellipsoid:
      j["radii"] = p.radii;
      break;
    case PrimitiveShape::cylinder:
      j["axis"] = p.axis;
      j["radius"] = p.radius;
      j["half_length"] = p.half_length;
      break;
  }
}

void from_json(const Json& j, Primitive& p) {
  require_known_keys(j,
                     {"shape", "center", "tissue", "radii", "thickness", "axis", "radius",
                      "half_length"},
                     "primitive");
  p = Primitive{};
  p.shape = parse_shape(j.at("shape").get<std::string>());
  read_opt(j, "center", p.center);
  read_opt(j, "tissue", p.tissue);
  read_opt(j, "radii", p.radii);
  read_opt(j, "thickness", p.thickness);
  read_opt(j, "axis", p.axis);
  read_opt(j, "radius", p.radius);
  read_opt(j, "half_length", p.half_length);
}

void to_json(Json& j, const PhantomSpec& p) {
  j = Json{{"world_extent", p.world_extent}, {"seed", p.seed}, {"primitives", p.primitives}};
}

void from_json(const Json& j, PhantomSpec& p) {
  require_known_keys(j, {"world_extent", "seed", "primitives"}, "phantom");
  read_opt(j, "world_extent", p.world_extent);
  read_opt(j, "seed", p.seed);
  read_opt(j, "primitives", p.primitives);
}

void to_json(Json& j, const ProbePose& p) {
  j = Json{{"origin", p.origin},
           {"orientation", p.orientation},
           {"in_plane_rotation", p.in_plane_rotation}};
}

void from_json(const Json& j, ProbePose& p) {
  require_known_keys(j, {"origin", "orientation", "in_plane_rotation"}, "pose");
  read_opt(j, "origin", p.origin);
  read_opt(j, "orientation", p.orientation);
  read_opt(j, "in_plane_rotation", p.in_plane_rotation);
}

void to_json(Json& j, const ScanGeometry& g) {
  j = Json{{"fov_deg", g.fov_deg},           {"depth_m", g.depth_m},
           {"probe_radius_m", g.probe_radius_m}, {"n_scanlines", g.n_scanlines},
           {"n_axial", g.n_axial},           {"cart_rows", g.cart_rows},
           {"cart_cols", g.cart_cols},       {"freq_mhz", g.freq_mhz}};
}

void from_json(const Json& j, ScanGeometry& g) {
  require_known_keys(j,
                     {"fov_deg", "depth_m", "probe_radius_m", "n_scanlines", "n_axial",
                      "cart_rows", "cart_cols", "freq_mhz"},
                     "geometry");
  read_opt(j, "fov_deg", g.fov_deg);
  read_opt(j, "depth_m", g.depth_m);
  read_opt(j, "probe_radius_m", g.probe_radius_m);
  read_opt(j, "n_scanlines", g.n_scanlines);
  read_opt(j, "n_axial", g.n_axial);
  read_opt(j, "cart_rows", g.cart_rows);
  read_opt(j, "cart_cols", g.cart_cols);
  read_opt(j, "freq_mhz", g.freq_mhz);
}

void to_json(Json& j, const TissueClass& t) {
  j = Json{{"name", t.name},
           {"mu_db_cm_mhz", t.mu_db_cm_mhz},
           {"scatter_mean", t.scatter_mean},
           {"scatter_std", t.scatter_std},
           {"echogenicity", t.echogenicity},
           {"impedance_mrayl", t.impedance_mrayl}};
}

void from_json(const Json& j, TissueClass& t) {
  require_known_keys(j,
                     {"name", "mu_db_cm_mhz", "scatter_mean", "scatter_std", "echogenicity",
                      "impedance_mrayl"},
                     "tissue");
  read_opt(j, "name", t.name);
  read_opt(j, "mu_db_cm_mhz", t.mu_db_cm_mhz);
  read_opt(j, "scatter_mean", t.scatter_mean);
  read_opt(j, "scatter_std", t.scatter_std);
  read_opt(j, "echogenicity", t.echogenicity);
  read_opt(j, "impedance_mrayl", t.impedance_mrayl);
}

void to_json(Json& j, const PsfSpec& p) {
  j = Json{{"axial_sigma", p.axial_sigma},
           {"lateral_sigma", p.lateral_sigma},
           {"axial_freq", p.axial_freq},
           {"lateral_growth", p.lateral_growth}};
}

void from_json(const Json& j, PsfSpec& p) {
  require_known_keys(j, {"axial_sigma", "lateral_sigma", "axial_freq", "lateral_growth"}, "psf");
  read_opt(j, "axial_sigma", p.axial_sigma);
  read_opt(j, "lateral_sigma", p.lateral_sigma);
  read_opt(j, "axial_freq", p.axial_freq);
  read_opt(j, "lateral_growth", p.lateral_growth);
}

void to_json(Json& j, const RenderQuality& q) {
  j = Json{{"tag", q.tag == RenderQuality::Tag::high ? "high" : "low"},
           {"scatterer_density_scale", q.scatterer_density_scale},
           {"psf_enabled", q.psf_enabled},
           {"axial_downsample", q.axial_downsample}};
}

void from_json(const Json& j, RenderQuality& q) {
  require_known_keys(j, {"tag", "scatterer_density_scale", "psf_enabled", "axial_downsample"},
                     "quality");
  if (auto it = j.find("tag"); it != j.end()) {
    const auto tag = it->get<std::string>();
    if (tag != "high" && tag != "low") {
      throw std::invalid_argument("quality: tag must be 'high' or 'low'");
    }
    q.tag = tag == "high" ? RenderQuality::Tag::high : RenderQuality::Tag::low;
  }
  read_opt(j, "scatterer_density_scale", q.scatterer_density_scale);
  read_opt(j, "psf_enabled", q.psf_enabled);
  read_opt(j, "axial_downsample", q.axial_downsample);
}

void to_json(Json& j, const OracleConfig& c) {
  j = Json{{"psf", c.psf},
           {"boundary_gain", c.boundary_gain},
           {"tgc_db_per_cm", c.tgc_db_per_cm},
           {"dynamic_range_db", c.dynamic_range_db},
           {"shadow_mu_threshold", c.shadow_mu_threshold},
           {"high", c.high}};
  j["low"] = c.low ? Json(*c.low) : Json(nullptr);
}

void from_json(const Json& j, OracleConfig& c) {
  require_known_keys(j,
                     {"psf", "boundary_gain", "tgc_db_per_cm", "dynamic_range_db",
                      "shadow_mu_threshold", "high", "low"},
                     "oracle");
  read_opt(j, "psf", c.psf);
  read_opt(j, "boundary_gain", c.boundary_gain);
  read_opt(j, "tgc_db_per_cm", c.tgc_db_per_cm);
  read_opt(j, "dynamic_range_db", c.dynamic_range_db);
  read_opt(j, "shadow_mu_threshold", c.shadow_mu_threshold);
  read_opt(j, "high", c.high);
  if (auto it = j.find("low"); it != j.end()) {
    if (it->is_null()) {
      c.low.reset();
    } else {
      RenderQuality q = low_quality();
      it->get_to(q);
      c.low = q;
    }
  }
}

void to_json(Json& j, const GeneratorConfig& c) {
  j = Json{{"n_down", c.n_down},
           {"base_channels", c.base_channels},
           {"channel_schedule", c.channel_schedule},
           {"use_att", c.use_att},
           {"use_concat", c.use_concat},
           {"use_texture_conv", c.use_texture_conv},
           {"use_noise", c.use_noise},
           {"extra_input", std::string(extra_input_name(c.extra_input))},
           {"instance_norm", c.instance_norm}};
}

void from_json(const Json& j, GeneratorConfig& c) {
  require_known_keys(j,
                     {"n_down", "base_channels", "channel_schedule", "use_att", "use_concat",
                      "use_texture_conv", "use_noise", "extra_input", "instance_norm"},
                     "generator");
  read_opt(j, "n_down", c.n_down);
  read_opt(j, "base_channels", c.base_channels);
  read_opt(j, "channel_schedule", c.channel_schedule);
  read_opt(j, "use_att", c.use_att);
  read_opt(j, "use_concat", c.use_concat);
  read_opt(j, "use_texture_conv", c.use_texture_conv);
  read_opt(j, "use_noise", c.use_noise);
  read_opt(j, "instance_norm", c.instance_norm);
  if (auto it = j.find("extra_input"); it != j.end()) {
    c.extra_input = parse_extra_input(it->get<std::string>());
  }
}

void to_json(Json& j, const DiscriminatorConfig& c) {
  j = Json{{"n_layers", c.n_layers},
           {"base_channels", c.base_channels},
           {"condition_channels", c.condition_channels}};
}

void from_json(const Json& j, DiscriminatorConfig& c) {
  require_known_keys(j, {"n_layers", "base_channels", "condition_channels"}, "discriminator");
  read_opt(j, "n_layers", c.n_layers);
  read_opt(j, "base_channels", c.base_channels);
  read_opt(j, "condition_channels", c.condition_channels);
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"lr", c.lr},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"batch_size", c.batch_size},
           {"lambda_f", c.lambda_f},
           {"crop", c.crop},
           {"epochs", c.epochs},
           {"seed", c.seed},
           {"variant", std::string(variant_name(c.variant))},
           {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const Json& j, TrainConfig& c) {
  require_known_keys(j,
                     {"lr", "beta1", "beta2", "batch_size", "lambda_f", "crop", "epochs", "seed",
                      "variant", "checkpoint_every"},
                     "train");
  read_opt(j, "lr", c.lr);
  read_opt(j, "beta1", c.beta1);
  read_opt(j, "beta2", c.beta2);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "lambda_f", c.lambda_f);
  read_opt(j, "crop", c.crop);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "seed", c.seed);
  if (auto it = j.find("variant"); it != j.end()) {
    c.variant = parse_variant(it->get<std::string>());
  }
  read_opt(j, "checkpoint_every", c.checkpoint_every);
}

void to_json(Json& j, const CheckpointMeta& m) {
  j = Json{{"generator", m.gen},
           {"discriminator", m.disc},
           {"train", m.train},
           {"epoch", m.epoch},
           {"step", m.step},
           {"dataset_id", m.dataset_id},
           {"image_size", {m.image_rows, m.image_cols}}};
}

void from_json(const Json& j, CheckpointMeta& m) {
  require_known_keys(j,
                     {"generator", "discriminator", "train", "epoch", "step", "dataset_id",
                      "image_size", "generator_params", "discriminator_params", "weights"},
                     "checkpoint");
  read_opt(j, "generator", m.gen);
  read_opt(j, "discriminator", m.disc);
  read_opt(j, "train", m.train);
  read_opt(j, "epoch", m.epoch);
  read_opt(j, "step", m.step);
  read_opt(j, "dataset_id", m.dataset_id);
  if (auto it = j.find("image_size"); it != j.end()) {
    m.image_rows = it->at(0).get<std::size_t>();
    m.image_cols = it->at(1).get<std::size_t>();
  }
}

}  // namespace sonogan
