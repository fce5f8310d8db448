#pragma once

// JSON forms of the configuration and metadata types. Readers start from the
// type's defaults, so partial objects are accepted; unknown keys are errors.

#include "json.hpp"
#include "sonogan/acoustics.hpp"
#include "sonogan/model.hpp"
#include "sonogan/oracle.hpp"
#include "sonogan/scene.hpp"
#include "sonogan/training.hpp"

namespace sonogan {

using Json = nlohmann::ordered_json;

void to_json(Json& j, const Vec3& v);
void from_json(const Json& j, Vec3& v);
void to_json(Json& j, const Quaternion& q);
void from_json(const Json& j, Quaternion& q);
void to_json(Json& j, const Primitive& p);
void from_json(const Json& j, Primitive& p);
void to_json(Json& j, const PhantomSpec& p);
void from_json(const Json& j, PhantomSpec& p);
void to_json(Json& j, const ProbePose& p);
void from_json(const Json& j, ProbePose& p);
void to_json(Json& j, const ScanGeometry& g);
void from_json(const Json& j, ScanGeometry& g);
void to_json(Json& j, const TissueClass& t);
void from_json(const Json& j, TissueClass& t);
void to_json(Json& j, const PsfSpec& p);
void from_json(const Json& j, PsfSpec& p);
void to_json(Json& j, const RenderQuality& q);
void from_json(const Json& j, RenderQuality& q);
void to_json(Json& j, const OracleConfig& c);
void from_json(const Json& j, OracleConfig& c);
void to_json(Json& j, const GeneratorConfig& c);
void from_json(const Json& j, GeneratorConfig& c);
void to_json(Json& j, const DiscriminatorConfig& c);
void from_json(const Json& j, DiscriminatorConfig& c);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);
void to_json(Json& j, const CheckpointMeta& m);
void from_json(const Json& j, CheckpointMeta& m);

// Throws naming the first key of `j` that is not in `allowed`.
void require_known_keys(const Json& j, std::initializer_list<const char*> allowed,
                        const char* what);

}  // namespace sonogan
