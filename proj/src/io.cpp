#include "pq4d/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pq4d/errors.hpp"
#include "pq4d/parallel.hpp"

namespace pq {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kCameraSchema = "pq4d.camera/1";
constexpr const char* kSceneSchema = "pq4d.scene/1";
constexpr const char* kReportSchema = "pq4d.report/1";
constexpr const char* kFieldSchema = "pq4d.field/1";
constexpr const char* kMetricsSchema = "pq4d.metrics/1";
constexpr const char* kDatasetSchema = "pq4d.dataset/1";
constexpr const char* kJobSchema = "pq4d.job/1";

// ---------------------------------------------------------------------------
// Raw bytes
// ---------------------------------------------------------------------------

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  if (size < 0) throw DataError("cannot read " + path.string());
  std::string bytes(static_cast<std::size_t>(size), '\0');
  in.seekg(0, std::ios::beg);
  in.read(bytes.data(), size);
  if (in.gcount() != size) throw DataError("cannot read " + path.string());
  return bytes;
}

void write_file_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw DataError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// PNM headers (PFM/PGM/PPM share the token syntax)
// ---------------------------------------------------------------------------

// Tokenizer over a PNM header: tokens separated by whitespace, '#' starts a
// comment running to the end of the line.
struct PnmCursor {
  const std::string& bytes;
  const fs::path& path;
  std::size_t pos = 0;

  bool at_end() const { return pos >= bytes.size(); }

  void skip_separators() {
    while (!at_end()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (!at_end() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::string token(const char* what) {
    skip_separators();
    if (at_end()) throw DataError(path.string() + ": missing " + what);
    const std::size_t start = pos;
    while (!at_end() && bytes[pos] != '#' &&
           !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    }
    return bytes.substr(start, pos - start);
  }

  int int_token(const char* what) {
    const std::string tok = token(what);
    try {
      std::size_t used = 0;
      const int value = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return value;
    } catch (const std::exception&) {
      throw DataError(path.string() + ": malformed " + std::string(what) + " '" + tok + "'");
    }
  }

  double double_token(const char* what) {
    const std::string tok = token(what);
    try {
      std::size_t used = 0;
      const double value = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return value;
    } catch (const std::exception&) {
      throw DataError(path.string() + ": malformed " + std::string(what) + " '" + tok + "'");
    }
  }

  // Exactly one whitespace byte separates the header from the pixel data, so
  // payloads beginning with whitespace-valued bytes survive.
  void binary_separator() {
    if (at_end() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      throw DataError(path.string() + ": missing separator before pixel data");
    }
    ++pos;
  }
};

void check_image_size(const fs::path& path, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw DataError(path.string() + ": image dimensions must be positive (got " +
                    std::to_string(width) + "x" + std::to_string(height) + ")");
  }
}

// Requires the payload to hold exactly `need` bytes; a short file reports the
// byte offset at which it ended.
void require_payload(const std::string& bytes, const fs::path& path, std::size_t offset,
                     std::size_t need) {
  const std::size_t have = bytes.size() - offset;
  if (have < need) {
    throw DataError(path.string() + ": truncated pixel data at byte " +
                    std::to_string(bytes.size()) + " (need " + std::to_string(offset + need) +
                    " bytes)");
  }
  if (have > need) {
    throw DataError(path.string() + ": " + std::to_string(have - need) +
                    " trailing bytes after pixel data");
  }
}

float float_from_le(const char* p) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if constexpr (std::endian::native == std::endian::big) {
    u = ((u & 0xff000000u) >> 24) | ((u & 0x00ff0000u) >> 8) | ((u & 0x0000ff00u) << 8) |
        ((u & 0x000000ffu) << 24);
  }
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void float_to_le(float f, char* p) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  if constexpr (std::endian::native == std::endian::big) {
    u = ((u & 0xff000000u) >> 24) | ((u & 0x00ff0000u) >> 8) | ((u & 0x0000ff00u) << 8) |
        ((u & 0x000000ffu) << 24);
  }
  std::memcpy(p, &u, 4);
}

// ---------------------------------------------------------------------------
// JSON plumbing
// ---------------------------------------------------------------------------

json read_json_document(const fs::path& path, const char* schema) {
  const std::string bytes = read_file_bytes(path);
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (!doc.is_object()) {
    throw DataError(path.string() + ": top-level JSON value is not an object");
  }
  const auto it = doc.find("schema_version");
  if (it == doc.end() || !it->is_string()) {
    throw DataError(path.string() + ": missing schema_version string");
  }
  const std::string version = it->get<std::string>();
  if (version != schema) {
    throw DataError(path.string() + ": unsupported schema_version '" + version + "' (expected '" +
                    schema + "')");
  }
  return doc;
}

void write_json_document(const fs::path& path, const json& doc) {
  write_file_bytes(path, doc.dump(2) + "\n");
}

// Converts structural JSON errors (missing keys, wrong types) and failed
// invariant checks into DataError carrying the document path.
template <typename Fn>
auto parse_fields(const fs::path& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d json_vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw std::invalid_argument("expected a 3-element numeric array");
  }
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

json mat3_json(const Eigen::Matrix3d& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) {
    rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  }
  return rows;
}

Eigen::Matrix3d json_mat3(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw std::invalid_argument("expected a 3x3 numeric array");
  }
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    const json& row = j.at(r);
    if (!row.is_array() || row.size() != 3) {
      throw std::invalid_argument("expected a 3x3 numeric array");
    }
    for (int c = 0; c < 3; ++c) m(r, c) = row.at(c).get<double>();
  }
  return m;
}

// ---------------------------------------------------------------------------
// Cameras
// ---------------------------------------------------------------------------

json camera_json(const CameraModel& camera) {
  json doc;
  doc["schema_version"] = kCameraSchema;
  doc["fx"] = camera.fx;
  doc["fy"] = camera.fy;
  doc["cx"] = camera.cx;
  doc["cy"] = camera.cy;
  doc["width"] = camera.width;
  doc["height"] = camera.height;
  doc["rotation"] = mat3_json(camera.rotation);
  doc["translation"] = vec3_json(camera.translation);
  return doc;
}

CameraModel camera_from_json(const json& doc) {
  CameraModel camera;
  camera.fx = doc.at("fx").get<double>();
  camera.fy = doc.at("fy").get<double>();
  camera.cx = doc.at("cx").get<double>();
  camera.cy = doc.at("cy").get<double>();
  camera.width = doc.at("width").get<int>();
  camera.height = doc.at("height").get<int>();
  camera.rotation = json_mat3(doc.at("rotation"));
  camera.translation = json_vec3(doc.at("translation"));
  camera.validate();
  return camera;
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

json scene_json(const DynamicPointScene& scene) {
  json gaussians = json::array();
  for (std::size_t i = 0; i < scene.size(); ++i) {
    json g;
    json keyframes = json::array();
    for (const Eigen::Vector3d& p : scene.keyframes[i]) keyframes.push_back(vec3_json(p));
    g["keyframes"] = std::move(keyframes);
    g["opacity"] = scene.opacity[i];
    g["scale"] = scene.scale[i];
    g["color"] = vec3_json(scene.color[i]);
    gaussians.push_back(std::move(g));
  }
  json doc;
  doc["schema_version"] = kSceneSchema;
  doc["keyframe_times"] = scene.keyframe_times;
  doc["frame_times"] = scene.frame_times;
  doc["gaussians"] = std::move(gaussians);
  return doc;
}

DynamicPointScene scene_from_json(const json& doc) {
  DynamicPointScene scene;
  scene.keyframe_times = doc.at("keyframe_times").get<std::vector<double>>();
  scene.frame_times = doc.at("frame_times").get<std::vector<double>>();
  for (const json& g : doc.at("gaussians")) {
    std::vector<Eigen::Vector3d> keyframes;
    for (const json& p : g.at("keyframes")) keyframes.push_back(json_vec3(p));
    scene.keyframes.push_back(std::move(keyframes));
    scene.opacity.push_back(g.at("opacity").get<double>());
    scene.scale.push_back(g.at("scale").get<double>());
    scene.color.push_back(json_vec3(g.at("color")));
  }
  scene.validate();
  return scene;
}

// ---------------------------------------------------------------------------
// Consensus reports
// ---------------------------------------------------------------------------

json flag_matrix_json(const std::vector<std::vector<std::uint8_t>>& rows) {
  json out = json::array();
  for (const auto& row : rows) {
    json r = json::array();
    for (std::uint8_t v : row) r.push_back(static_cast<int>(v));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::vector<std::uint8_t>> flag_matrix_from_json(const json& j) {
  std::vector<std::vector<std::uint8_t>> out;
  for (const json& row : j) {
    std::vector<std::uint8_t> r;
    for (const json& v : row) r.push_back(v.get<int>() != 0 ? 1 : 0);
    out.push_back(std::move(r));
  }
  return out;
}

void check_report_shape(const ConsensusReport& report) {
  const std::size_t v = static_cast<std::size_t>(report.num_views);
  if (report.num_views < 2) throw std::invalid_argument("report needs at least two views");
  const bool square = report.visibility.size() == v && report.consensus_fraction.size() == v &&
                      report.votes.size() == v;
  if (!square || report.view_ids.size() != v || report.visible_peers.size() != v ||
      report.reliability_score.size() != v || report.reliable.size() != v) {
    throw std::invalid_argument("report fields do not match num_views");
  }
  for (std::size_t i = 0; i < v; ++i) {
    if (report.visibility[i].size() != v || report.consensus_fraction[i].size() != v ||
        report.votes[i].size() != v) {
      throw std::invalid_argument("report matrices are not square");
    }
  }
}

json report_json(const ConsensusReport& report) {
  json config;
  config["delta"] = report.config.delta;
  config["epsilon"] = report.config.epsilon;
  config["tau"] = report.config.tau;
  config["visibility_min"] = report.config.visibility_min;
  config["occlusion_tol"] = report.config.occlusion_tol;

  json doc;
  doc["schema_version"] = kReportSchema;
  doc["num_views"] = report.num_views;
  doc["config"] = std::move(config);
  doc["view_ids"] = report.view_ids;
  doc["visibility"] = flag_matrix_json(report.visibility);
  doc["consensus_fraction"] = report.consensus_fraction;
  doc["votes"] = flag_matrix_json(report.votes);
  doc["visible_peers"] = report.visible_peers;
  doc["reliability_score"] = report.reliability_score;
  json reliable = json::array();
  for (std::uint8_t v : report.reliable) reliable.push_back(static_cast<int>(v));
  doc["reliable"] = std::move(reliable);
  return doc;
}

ConsensusReport report_from_json(const json& doc) {
  ConsensusReport report;
  report.num_views = doc.at("num_views").get<int>();
  const json& config = doc.at("config");
  report.config.delta = config.at("delta").get<double>();
  report.config.epsilon = config.at("epsilon").get<double>();
  report.config.tau = config.at("tau").get<double>();
  report.config.visibility_min = config.at("visibility_min").get<double>();
  report.config.occlusion_tol = config.at("occlusion_tol").get<double>();
  report.config.validate();
  report.view_ids = doc.at("view_ids").get<std::vector<int>>();
  report.visibility = flag_matrix_from_json(doc.at("visibility"));
  report.consensus_fraction = doc.at("consensus_fraction").get<std::vector<std::vector<double>>>();
  report.votes = flag_matrix_from_json(doc.at("votes"));
  report.visible_peers = doc.at("visible_peers").get<std::vector<int>>();
  report.reliability_score = doc.at("reliability_score").get<std::vector<double>>();
  for (const json& v : doc.at("reliable")) {
    report.reliable.push_back(v.get<int>() != 0 ? 1 : 0);
  }
  check_report_shape(report);
  return report;
}

// Re-derives every verdict column from the stored evidence (visibility and
// per-pair consensus fractions) under the stored thresholds. Any disagreement
// means the document was edited after the run that produced it.
bool report_consistent(const ConsensusReport& report) {
  const int v = report.num_views;
  for (int i = 0; i < v; ++i) {
    int peers = 0;
    int votes = 0;
    for (int j = 0; j < v; ++j) {
      const bool expected_vote = j != i && report.visibility[i][j] != 0 &&
                                 report.consensus_fraction[i][j] > report.config.epsilon;
      if ((report.votes[i][j] != 0) != expected_vote) return false;
      if (j == i) continue;
      peers += report.visibility[i][j] != 0;
      votes += expected_vote;
    }
    if (report.visible_peers[i] != peers) return false;
    const double score = static_cast<double>(votes) / static_cast<double>(v - 1);
    if (report.reliability_score[i] != score) return false;
    const bool expected_reliable = peers >= 1 && score >= report.config.tau;
    if ((report.reliable[i] != 0) != expected_reliable) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Identity fields
// ---------------------------------------------------------------------------

json field_json(const IdentityField& field) {
  const FieldConfig& c = field.config;
  json config;
  config["spatial_frequencies"] = c.spatial_frequencies;
  config["temporal_frequencies"] = c.temporal_frequencies;
  config["hidden_layers"] = c.hidden_layers;
  config["hidden_width"] = c.hidden_width;
  config["embedding_dim"] = c.embedding_dim;
  config["classes"] = c.classes;
  config["bbox_lo"] = vec3_json(c.bbox_lo);
  config["bbox_hi"] = vec3_json(c.bbox_hi);

  json doc;
  doc["schema_version"] = kFieldSchema;
  doc["config"] = std::move(config);
  doc["params"] = std::vector<double>(field.params.data(), field.params.data() + field.params.size());
  return doc;
}

IdentityField field_from_json(const json& doc) {
  IdentityField field;
  const json& config = doc.at("config");
  field.config.spatial_frequencies = config.at("spatial_frequencies").get<int>();
  field.config.temporal_frequencies = config.at("temporal_frequencies").get<int>();
  field.config.hidden_layers = config.at("hidden_layers").get<int>();
  field.config.hidden_width = config.at("hidden_width").get<int>();
  field.config.embedding_dim = config.at("embedding_dim").get<int>();
  field.config.classes = config.at("classes").get<int>();
  field.config.bbox_lo = json_vec3(config.at("bbox_lo"));
  field.config.bbox_hi = json_vec3(config.at("bbox_hi"));
  const std::vector<double> params = doc.at("params").get<std::vector<double>>();
  field.params = Eigen::Map<const Eigen::VectorXd>(params.data(),
                                                   static_cast<Eigen::Index>(params.size()));
  field.validate();
  return field;
}

// ---------------------------------------------------------------------------
// Metrics tables
// ---------------------------------------------------------------------------

json type_metrics_json(const TypeMetrics& m) {
  json doc;
  doc["present"] = m.present;
  doc["query_count"] = m.query_count;
  doc["miou"] = m.miou;
  doc["macc"] = m.macc;
  return doc;
}

TypeMetrics type_metrics_from_json(const json& doc) {
  TypeMetrics m;
  m.present = doc.at("present").get<bool>();
  m.query_count = doc.at("query_count").get<int>();
  m.miou = doc.at("miou").get<double>();
  m.macc = doc.at("macc").get<double>();
  return m;
}

// ---------------------------------------------------------------------------
// Query metadata and synthesis jobs
// ---------------------------------------------------------------------------

json query_json(const QueryMeta& query) {
  json doc;
  doc["id"] = query.id;
  doc["type"] = query.type;
  doc["prompt"] = query.prompt;
  return doc;
}

QueryMeta query_from_json(const json& doc) {
  QueryMeta query;
  query.id = doc.at("id").get<std::string>();
  query.type = doc.at("type").get<std::string>();
  query.prompt = doc.value("prompt", std::string());
  parse_query_type(query.type);  // unknown category names are data errors
  return query;
}

json object_spec_json(const ObjectSpec& object) {
  json doc;
  doc["primitive"] = object.primitive;
  doc["radius"] = object.radius;
  doc["half_extents"] = vec3_json(object.half_extents);
  doc["color"] = vec3_json(object.color);
  doc["keyframe_times"] = object.keyframe_times;
  json keyframes = json::array();
  for (const Eigen::Vector3d& p : object.keyframes) keyframes.push_back(vec3_json(p));
  doc["keyframes"] = std::move(keyframes);
  return doc;
}

ObjectSpec object_spec_from_json(const json& doc) {
  ObjectSpec object;
  object.primitive = doc.value("primitive", object.primitive);
  object.radius = doc.value("radius", object.radius);
  if (doc.contains("half_extents")) object.half_extents = json_vec3(doc.at("half_extents"));
  if (doc.contains("color")) object.color = json_vec3(doc.at("color"));
  if (doc.contains("keyframe_times")) {
    object.keyframe_times = doc.at("keyframe_times").get<std::vector<double>>();
  }
  if (doc.contains("keyframes")) {
    object.keyframes.clear();
    for (const json& p : doc.at("keyframes")) object.keyframes.push_back(json_vec3(p));
  }
  return object;
}

json ring_spec_json(const RingSpec& ring) {
  json doc;
  doc["count"] = ring.count;
  doc["radius"] = ring.radius;
  doc["height"] = ring.height;
  doc["fov_deg"] = ring.fov_deg;
  doc["look_at"] = vec3_json(ring.look_at);
  return doc;
}

RingSpec ring_spec_from_json(const json& doc) {
  RingSpec ring;
  ring.count = doc.value("count", ring.count);
  ring.radius = doc.value("radius", ring.radius);
  ring.height = doc.value("height", ring.height);
  ring.fov_deg = doc.value("fov_deg", ring.fov_deg);
  if (doc.contains("look_at")) ring.look_at = json_vec3(doc.at("look_at"));
  return ring;
}

json scene_spec_json(const SceneSpec& spec) {
  json objects = json::array();
  for (const ObjectSpec& object : spec.objects) objects.push_back(object_spec_json(object));
  json doc;
  doc["objects"] = std::move(objects);
  doc["ring"] = ring_spec_json(spec.ring);
  doc["frame_count"] = spec.frame_count;
  doc["width"] = spec.width;
  doc["height"] = spec.height;
  doc["target_object"] = spec.target_object;
  doc["points_per_area"] = spec.points_per_area;
  doc["seed"] = spec.seed;
  return doc;
}

SceneSpec scene_spec_from_json(const json& doc) {
  SceneSpec spec;
  spec.objects.clear();
  for (const json& object : doc.at("objects")) {
    spec.objects.push_back(object_spec_from_json(object));
  }
  if (doc.contains("ring")) spec.ring = ring_spec_from_json(doc.at("ring"));
  spec.frame_count = doc.value("frame_count", spec.frame_count);
  spec.width = doc.value("width", spec.width);
  spec.height = doc.value("height", spec.height);
  spec.target_object = doc.value("target_object", spec.target_object);
  spec.points_per_area = doc.value("points_per_area", spec.points_per_area);
  spec.seed = doc.value("seed", spec.seed);
  return spec;
}

json corruption_spec_json(const CorruptionSpec& spec) {
  json doc;
  doc["jitter_views"] = spec.jitter_views;
  doc["jitter_probability"] = spec.jitter_probability;
  doc["jitter_radius"] = spec.jitter_radius;
  doc["dropout_views"] = spec.dropout_views;
  doc["dropout_probability"] = spec.dropout_probability;
  doc["hallucinate_views"] = spec.hallucinate_views;
  doc["seed"] = spec.seed;
  return doc;
}

CorruptionSpec corruption_spec_from_json(const json& doc) {
  CorruptionSpec spec;
  if (doc.contains("jitter_views")) spec.jitter_views = doc.at("jitter_views").get<std::vector<int>>();
  spec.jitter_probability = doc.value("jitter_probability", spec.jitter_probability);
  spec.jitter_radius = doc.value("jitter_radius", spec.jitter_radius);
  if (doc.contains("dropout_views")) {
    spec.dropout_views = doc.at("dropout_views").get<std::vector<int>>();
  }
  spec.dropout_probability = doc.value("dropout_probability", spec.dropout_probability);
  if (doc.contains("hallucinate_views")) {
    spec.hallucinate_views = doc.at("hallucinate_views").get<std::vector<int>>();
  }
  spec.seed = doc.value("seed", spec.seed);
  return spec;
}

// ---------------------------------------------------------------------------
// Dataset layout helpers
// ---------------------------------------------------------------------------

std::string view_dir_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%02d", id);
  return buf;
}

std::string expand_frame_pattern(const std::string& pattern, int frame) {
  static constexpr const char* kPlaceholder = "{frame}";
  const std::size_t at = pattern.find(kPlaceholder);
  if (at == std::string::npos) {
    throw std::invalid_argument("file pattern lacks the {frame} placeholder: " + pattern);
  }
  char digits[16];
  std::snprintf(digits, sizeof digits, "%04d", frame);
  std::string out = pattern;
  out.replace(at, std::strlen(kPlaceholder), digits);
  return out;
}

void create_directory_checked(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

struct ManifestView {
  int id = 0;
  std::string camera_file;
  std::string rgb_pattern;
  std::string depth_pattern;
  std::string proposal_pattern;
  std::string gt_pattern;
};

// Checks the parts of a dataset that must line up before it can be written
// or used: one timestamp per frame, scene times matching, per-view frame
// counts, and image dimensions matching the camera.
void check_dataset(const Dataset& data) {
  const std::size_t frames = data.timestamps.size();
  if (frames == 0) throw std::invalid_argument("dataset has no frames");
  if (data.views.empty()) throw std::invalid_argument("dataset has no views");
  data.scene.validate();
  if (data.scene.frame_times != data.timestamps) {
    throw std::invalid_argument("dataset timestamps do not match the scene frame times");
  }
  parse_query_type(data.query.type);
  std::set<int> ids;
  for (const ViewData& view : data.views) {
    view.camera.validate();
    if (!ids.insert(view.id).second) {
      throw std::invalid_argument("duplicate view id " + std::to_string(view.id));
    }
    if (view.rgb.size() != frames || view.depths.size() != frames ||
        view.proposals.frames.size() != frames || view.gt.frames.size() != frames) {
      throw std::invalid_argument("view " + std::to_string(view.id) +
                                  " does not have one image of each kind per frame");
    }
    if (view.proposals.view != view.id || view.gt.view != view.id) {
      throw std::invalid_argument("mask sequences of view " + std::to_string(view.id) +
                                  " carry a different view id");
    }
    for (std::size_t t = 0; t < frames; ++t) {
      const bool sized = view.rgb[t].width == view.camera.width &&
                         view.rgb[t].height == view.camera.height &&
                         view.depths[t].width == view.camera.width &&
                         view.depths[t].height == view.camera.height &&
                         view.proposals.frames[t].width == view.camera.width &&
                         view.proposals.frames[t].height == view.camera.height &&
                         view.gt.frames[t].width == view.camera.width &&
                         view.gt.frames[t].height == view.camera.height;
      if (!sized) {
        throw std::invalid_argument("view " + std::to_string(view.id) + " frame " +
                                    std::to_string(t) + " does not match the camera size");
      }
    }
  }
  if (data.holdout_view != -1 && !ids.contains(data.holdout_view)) {
    throw std::invalid_argument("holdout view " + std::to_string(data.holdout_view) +
                                " is not one of the dataset views");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Image files
// ---------------------------------------------------------------------------

void save_pfm(const fs::path& path, const DepthMap& depth) {
  depth.validate();
  std::string bytes = "Pf\n" + std::to_string(depth.width) + " " + std::to_string(depth.height) +
                      "\n-1.0\n";
  const std::size_t header = bytes.size();
  const std::size_t count =
      static_cast<std::size_t>(depth.width) * static_cast<std::size_t>(depth.height);
  bytes.resize(header + 4 * count);
  char* out = bytes.data() + header;
  for (int y = depth.height - 1; y >= 0; --y) {
    for (int x = 0; x < depth.width; ++x) {
      const float v = depth.at(x, y);
      float_to_le(v == kNoDepth ? 0.0f : v, out);
      out += 4;
    }
  }
  write_file_bytes(path, bytes);
}

DepthMap load_pfm(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  PnmCursor cur{bytes, path};
  const std::string magic = cur.token("PFM magic");
  if (magic == "PF") throw DataError(path.string() + ": color PFM is not supported");
  if (magic != "Pf") {
    throw DataError(path.string() + ": not a grayscale PFM (magic '" + magic + "')");
  }
  const int width = cur.int_token("width");
  const int height = cur.int_token("height");
  check_image_size(path, width, height);
  const double scale = cur.double_token("scale");
  if (!(scale < 0.0)) {
    throw DataError(path.string() + ": big-endian PFM is not supported (scale must be negative)");
  }
  cur.binary_separator();
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  require_payload(bytes, path, cur.pos, 4 * count);

  const float factor = static_cast<float>(-scale);
  DepthMap depth(width, height);
  const char* in = bytes.data() + cur.pos;
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      const float v = float_from_le(in);
      in += 4;
      if (!std::isfinite(v) || v < 0.0f) {
        throw DataError(path.string() + ": invalid depth sample at pixel (" + std::to_string(x) +
                        ", " + std::to_string(y) + ")");
      }
      depth.at(x, y) = v == 0.0f ? kNoDepth : v * factor;
    }
  }
  return depth;
}

void save_pgm(const fs::path& path, const BinaryMask& mask) {
  const std::size_t count =
      static_cast<std::size_t>(mask.width) * static_cast<std::size_t>(mask.height);
  if (mask.width <= 0 || mask.height <= 0 || mask.values.size() != count) {
    throw std::invalid_argument("mask dimensions are degenerate");
  }
  std::string bytes = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) +
                      "\n255\n";
  const std::size_t header = bytes.size();
  bytes.resize(header + count);
  for (std::size_t p = 0; p < count; ++p) {
    bytes[header + p] = mask.values[p] ? static_cast<char>(255) : 0;
  }
  write_file_bytes(path, bytes);
}

BinaryMask load_pgm(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  PnmCursor cur{bytes, path};
  const std::string magic = cur.token("PGM magic");
  if (magic != "P5") throw DataError(path.string() + ": not a binary PGM (magic '" + magic + "')");
  const int width = cur.int_token("width");
  const int height = cur.int_token("height");
  check_image_size(path, width, height);
  const int maxval = cur.int_token("maxval");
  if (maxval < 1 || maxval > 255) {
    throw DataError(path.string() + ": unsupported maxval " + std::to_string(maxval) +
                    " (expected 1..255)");
  }
  cur.binary_separator();
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  require_payload(bytes, path, cur.pos, count);

  BinaryMask mask(width, height);
  for (std::size_t p = 0; p < count; ++p) {
    mask.values[p] = bytes[cur.pos + p] != 0 ? 1 : 0;
  }
  return mask;
}

void save_ppm(const fs::path& path, const ColorImage& image) {
  const std::size_t count =
      static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height);
  if (image.width <= 0 || image.height <= 0 || image.rgb.size() != 3 * count) {
    throw std::invalid_argument("image dimensions are degenerate");
  }
  std::string bytes = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                      "\n255\n";
  const std::size_t header = bytes.size();
  bytes.resize(header + 3 * count);
  for (std::size_t p = 0; p < 3 * count; ++p) {
    const float v = std::clamp(image.rgb[p], 0.0f, 1.0f);
    bytes[header + p] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
  }
  write_file_bytes(path, bytes);
}

ColorImage load_ppm(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  PnmCursor cur{bytes, path};
  const std::string magic = cur.token("PPM magic");
  if (magic != "P6") throw DataError(path.string() + ": not a binary PPM (magic '" + magic + "')");
  const int width = cur.int_token("width");
  const int height = cur.int_token("height");
  check_image_size(path, width, height);
  const int maxval = cur.int_token("maxval");
  if (maxval < 1 || maxval > 255) {
    throw DataError(path.string() + ": unsupported maxval " + std::to_string(maxval) +
                    " (expected 1..255)");
  }
  cur.binary_separator();
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  require_payload(bytes, path, cur.pos, 3 * count);

  ColorImage image(width, height);
  for (std::size_t p = 0; p < 3 * count; ++p) {
    image.rgb[p] = static_cast<float>(static_cast<unsigned char>(bytes[cur.pos + p])) /
                   static_cast<float>(maxval);
  }
  return image;
}

// ---------------------------------------------------------------------------
// JSON documents
// ---------------------------------------------------------------------------

void save_camera(const fs::path& path, const CameraModel& camera) {
  camera.validate();
  write_json_document(path, camera_json(camera));
}

CameraModel load_camera(const fs::path& path) {
  const json doc = read_json_document(path, kCameraSchema);
  return parse_fields(path, [&] { return camera_from_json(doc); });
}

void save_scene(const fs::path& path, const DynamicPointScene& scene) {
  scene.validate();
  write_json_document(path, scene_json(scene));
}

DynamicPointScene load_scene(const fs::path& path) {
  const json doc = read_json_document(path, kSceneSchema);
  return parse_fields(path, [&] { return scene_from_json(doc); });
}

void save_report(const fs::path& path, const ConsensusReport& report) {
  check_report_shape(report);
  write_json_document(path, report_json(report));
}

LoadedReport load_report(const fs::path& path) {
  const json doc = read_json_document(path, kReportSchema);
  return parse_fields(path, [&] {
    LoadedReport out;
    out.report = report_from_json(doc);
    out.consistent = report_consistent(out.report);
    return out;
  });
}

void save_field(const fs::path& path, const IdentityField& field) {
  field.validate();
  write_json_document(path, field_json(field));
}

IdentityField load_field(const fs::path& path) {
  const json doc = read_json_document(path, kFieldSchema);
  return parse_fields(path, [&] { return field_from_json(doc); });
}

void save_metrics(const fs::path& path, const MetricsTable& table) {
  json per_type;
  for (QueryType type : kAllQueryTypes) {
    per_type[query_type_name(type)] = type_metrics_json(table.per_type[static_cast<std::size_t>(type)]);
  }
  json doc;
  doc["schema_version"] = kMetricsSchema;
  doc["overall"] = type_metrics_json(table.overall);
  doc["per_type"] = std::move(per_type);
  write_json_document(path, doc);
}

MetricsTable load_metrics(const fs::path& path) {
  const json doc = read_json_document(path, kMetricsSchema);
  return parse_fields(path, [&] {
    MetricsTable table;
    table.overall = type_metrics_from_json(doc.at("overall"));
    const json& per_type = doc.at("per_type");
    for (QueryType type : kAllQueryTypes) {
      table.per_type[static_cast<std::size_t>(type)] =
          type_metrics_from_json(per_type.at(query_type_name(type)));
    }
    return table;
  });
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

void save_dataset(const fs::path& root, const Dataset& data) {
  check_dataset(data);
  create_directory_checked(root);

  save_scene(root / "scene.json", data.scene);

  json views = json::array();
  for (const ViewData& view : data.views) {
    const std::string dir = "views/" + view_dir_name(view.id);
    create_directory_checked(root / "views" / view_dir_name(view.id));
    save_camera(root / dir / "camera.json", view.camera);

    const std::string rgb_pattern = dir + "/rgb_{frame}.ppm";
    const std::string depth_pattern = dir + "/depth_{frame}.pfm";
    const std::string proposal_pattern = dir + "/proposal_{frame}.pgm";
    const std::string gt_pattern = dir + "/gt_{frame}.pgm";
    for (std::size_t t = 0; t < data.timestamps.size(); ++t) {
      const int frame = static_cast<int>(t);
      save_ppm(root / expand_frame_pattern(rgb_pattern, frame), view.rgb[t]);
      save_pfm(root / expand_frame_pattern(depth_pattern, frame), view.depths[t]);
      save_pgm(root / expand_frame_pattern(proposal_pattern, frame), view.proposals.frames[t]);
      save_pgm(root / expand_frame_pattern(gt_pattern, frame), view.gt.frames[t]);
    }

    json entry;
    entry["id"] = view.id;
    entry["camera_file"] = dir + "/camera.json";
    entry["rgb_pattern"] = rgb_pattern;
    entry["depth_pattern"] = depth_pattern;
    entry["proposal_pattern"] = proposal_pattern;
    entry["gt_pattern"] = gt_pattern;
    views.push_back(std::move(entry));
  }

  json manifest;
  manifest["schema_version"] = kDatasetSchema;
  manifest["frame_count"] = static_cast<int>(data.timestamps.size());
  manifest["timestamps"] = data.timestamps;
  manifest["scene_file"] = "scene.json";
  manifest["holdout_view"] = data.holdout_view;
  manifest["query"] = query_json(data.query);
  manifest["views"] = std::move(views);
  write_json_document(root / "manifest.json", manifest);
}

Dataset load_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  const json doc = read_json_document(manifest_path, kDatasetSchema);

  Dataset data;
  int frame_count = 0;
  std::string scene_file;
  std::vector<ManifestView> entries;
  parse_fields(manifest_path, [&] {
    frame_count = doc.at("frame_count").get<int>();
    if (frame_count <= 0) throw std::invalid_argument("frame_count must be positive");
    data.timestamps = doc.at("timestamps").get<std::vector<double>>();
    if (data.timestamps.size() != static_cast<std::size_t>(frame_count)) {
      throw std::invalid_argument("timestamps length does not match frame_count");
    }
    scene_file = doc.at("scene_file").get<std::string>();
    data.holdout_view = doc.value("holdout_view", -1);
    data.query = query_from_json(doc.at("query"));
    if (doc.at("views").empty()) throw std::invalid_argument("manifest lists no views");
    for (const json& view : doc.at("views")) {
      ManifestView entry;
      entry.id = view.at("id").get<int>();
      entry.camera_file = view.at("camera_file").get<std::string>();
      entry.rgb_pattern = view.at("rgb_pattern").get<std::string>();
      entry.depth_pattern = view.at("depth_pattern").get<std::string>();
      entry.proposal_pattern = view.at("proposal_pattern").get<std::string>();
      entry.gt_pattern = view.at("gt_pattern").get<std::string>();
      // Surface malformed patterns while we still know which view they
      // belong to rather than at first use.
      expand_frame_pattern(entry.rgb_pattern, 0);
      expand_frame_pattern(entry.depth_pattern, 0);
      expand_frame_pattern(entry.proposal_pattern, 0);
      expand_frame_pattern(entry.gt_pattern, 0);
      entries.push_back(std::move(entry));
    }
  });

  const fs::path scene_path = root / scene_file;
  data.scene = load_scene(scene_path);
  if (data.scene.frame_count() != frame_count) {
    throw DataError(scene_path.string() + ": scene has " +
                    std::to_string(data.scene.frame_count()) + " frames but the manifest lists " +
                    std::to_string(frame_count));
  }
  if (data.scene.frame_times != data.timestamps) {
    throw DataError(scene_path.string() + ": scene frame times differ from manifest timestamps");
  }

  std::set<int> ids;
  for (const ManifestView& entry : entries) {
    if (!ids.insert(entry.id).second) {
      throw DataError(manifest_path.string() + ": duplicate view id " + std::to_string(entry.id));
    }
    ViewData view;
    view.id = entry.id;
    view.camera = load_camera(root / entry.camera_file);
    view.proposals.view = entry.id;
    view.gt.view = entry.id;

    for (int t = 0; t < frame_count; ++t) {
      const std::array<std::string, 4> files = {
          expand_frame_pattern(entry.rgb_pattern, t),
          expand_frame_pattern(entry.depth_pattern, t),
          expand_frame_pattern(entry.proposal_pattern, t),
          expand_frame_pattern(entry.gt_pattern, t),
      };
      for (const std::string& rel : files) {
        if (!fs::exists(root / rel)) {
          throw DataError((root / rel).string() + ": missing file (referenced by " +
                          manifest_path.string() + ")");
        }
      }
      view.rgb.push_back(load_ppm(root / files[0]));
      view.depths.push_back(load_pfm(root / files[1]));
      view.proposals.frames.push_back(load_pgm(root / files[2]));
      view.gt.frames.push_back(load_pgm(root / files[3]));

      const std::array<const char*, 4> kinds = {"rgb", "depth", "proposal mask", "gt mask"};
      const std::array<std::pair<int, int>, 4> sizes = {
          std::pair{view.rgb.back().width, view.rgb.back().height},
          std::pair{view.depths.back().width, view.depths.back().height},
          std::pair{view.proposals.frames.back().width, view.proposals.frames.back().height},
          std::pair{view.gt.frames.back().width, view.gt.frames.back().height},
      };
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        if (sizes[k].first != view.camera.width || sizes[k].second != view.camera.height) {
          throw DataError((root / files[k]).string() + ": " + kinds[k] + " is " +
                          std::to_string(sizes[k].first) + "x" + std::to_string(sizes[k].second) +
                          " but the view camera is " + std::to_string(view.camera.width) + "x" +
                          std::to_string(view.camera.height));
        }
      }
    }
    data.views.push_back(std::move(view));
  }

  if (data.holdout_view != -1 && !ids.contains(data.holdout_view)) {
    throw DataError(manifest_path.string() + ": holdout view " +
                    std::to_string(data.holdout_view) + " is not one of the dataset views");
  }
  return data;
}

// ---------------------------------------------------------------------------
// Synthesis jobs
// ---------------------------------------------------------------------------

void save_synth_job(const fs::path& path, const SynthJob& job) {
  job.scene.validate();
  job.corruption.validate();
  json doc;
  doc["schema_version"] = kJobSchema;
  doc["scene"] = scene_spec_json(job.scene);
  doc["corruption"] = corruption_spec_json(job.corruption);
  doc["corrupt"] = job.corrupt;
  doc["query"] = query_json(job.query);
  doc["holdout_view"] = job.holdout_view;
  write_json_document(path, doc);
}

SynthJob load_synth_job(const fs::path& path) {
  const json doc = read_json_document(path, kJobSchema);
  return parse_fields(path, [&] {
    SynthJob job;
    job.scene = scene_spec_from_json(doc.at("scene"));
    if (doc.contains("corruption")) {
      job.corruption = corruption_spec_from_json(doc.at("corruption"));
    }
    job.corrupt = doc.value("corrupt", true);
    if (doc.contains("query")) job.query = query_from_json(doc.at("query"));
    job.holdout_view = doc.value("holdout_view", -1);
    job.scene.validate();
    job.corruption.validate();
    if (job.holdout_view < -1 || job.holdout_view >= job.scene.ring.count) {
      throw std::invalid_argument("holdout_view " + std::to_string(job.holdout_view) +
                                  " is not a ring view index");
    }
    return job;
  });
}

Dataset synthesize_dataset(const SynthJob& job) {
  job.scene.validate();
  job.corruption.validate();
  if (job.holdout_view < -1 || job.holdout_view >= job.scene.ring.count) {
    throw std::invalid_argument("holdout_view " + std::to_string(job.holdout_view) +
                                " is not a ring view index");
  }
  parse_query_type(job.query.type);

  const SynthResult result = generate_scene(job.scene);
  const int target = job.scene.target_object;
  const int object_count = static_cast<int>(job.scene.objects.size());
  // Hallucinating views swap in another object's track when the scene offers
  // one; single-object scenes cannot hallucinate and corrupt_masks will say so.
  const int wrong = object_count >= 2 ? (target + 1) % object_count : -1;

  Dataset data;
  data.scene = result.scene;
  data.timestamps = result.scene.frame_times;
  data.query = job.query;
  data.holdout_view = job.holdout_view;

  const int frame_count = static_cast<int>(data.timestamps.size());
  data.views.resize(result.cameras.size());
  for (std::size_t v = 0; v < result.cameras.size(); ++v) {
    ViewData& view = data.views[v];
    view.id = static_cast<int>(v);
    view.camera = result.cameras[v];
    view.depths = result.depths[v];
    view.gt = result.gt_masks[static_cast<std::size_t>(target)][v];
    if (job.corrupt) {
      const MaskSequence* source =
          wrong >= 0 ? &result.gt_masks[static_cast<std::size_t>(wrong)][v] : nullptr;
      view.proposals = corrupt_masks(view.gt, job.corruption, source);
    } else {
      view.proposals = view.gt;
    }
    view.rgb.resize(static_cast<std::size_t>(frame_count));
    parallel_for(0, frame_count, [&](int t) {
      view.rgb[static_cast<std::size_t>(t)] =
          render(result.scene, view.camera, data.timestamps[static_cast<std::size_t>(t)]).color;
    });
  }
  return data;
}

}  // namespace pq
