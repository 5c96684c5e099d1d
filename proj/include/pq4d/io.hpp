#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pq4d/consensus.hpp"
#include "pq4d/eval.hpp"
#include "pq4d/field.hpp"
#include "pq4d/geometry.hpp"
#include "pq4d/scene.hpp"
#include "pq4d/synth.hpp"

namespace pq {

// ---------------------------------------------------------------------------
// Image files. Every loader throws DataError with the offending path in the
// message; truncated payloads additionally report the byte offset at which
// the file ended.
// ---------------------------------------------------------------------------

/// Grayscale PFM ("Pf"), scale -1.0 (little-endian), scanlines stored bottom
/// to top. kNoDepth pixels are written as 0.0 and restored on load.
void save_pfm(const std::filesystem::path& path, const DepthMap& depth);
DepthMap load_pfm(const std::filesystem::path& path);

/// Binary PGM ("P5", maxval 255): 0 background, 255 foreground. Any nonzero
/// byte loads as foreground.
void save_pgm(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask load_pgm(const std::filesystem::path& path);

/// Binary PPM ("P6", maxval 255); float channels in [0,1] are quantized to
/// bytes on save and divided back on load.
void save_ppm(const std::filesystem::path& path, const ColorImage& image);
ColorImage load_ppm(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// JSON documents. Every document carries a top-level schema_version string;
// loading rejects unsupported versions and ignores unknown fields. Numbers
// are written with enough decimal digits to reparse to the identical double,
// so every save/load pair below is a round-trip identity.
// ---------------------------------------------------------------------------

void save_camera(const std::filesystem::path& path, const CameraModel& camera);
CameraModel load_camera(const std::filesystem::path& path);

void save_scene(const std::filesystem::path& path, const DynamicPointScene& scene);
DynamicPointScene load_scene(const std::filesystem::path& path);

void save_report(const std::filesystem::path& path, const ConsensusReport& report);

/// A reloaded report plus the result of re-deriving its verdict columns
/// (votes, visible peers, reliability scores, reliable flags) from the stored
/// evidence and thresholds. `consistent` is false when any stored value
/// disagrees with the recomputation — e.g. a hand-edited tau.
struct LoadedReport {
  ConsensusReport report;
  bool consistent = true;
};
LoadedReport load_report(const std::filesystem::path& path);

void save_field(const std::filesystem::path& path, const IdentityField& field);
IdentityField load_field(const std::filesystem::path& path);

void save_metrics(const std::filesystem::path& path, const MetricsTable& table);
MetricsTable load_metrics(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Datasets: one directory per clip with a manifest tying together the scene,
// per-view cameras, and per-frame image files.
// ---------------------------------------------------------------------------

/// Free-text query metadata carried through the pipeline. The prompt is an
/// opaque string; `type` must name one of the benchmark query categories.
struct QueryMeta {
  std::string id = "query";
  std::string type = "attribute";
  std::string prompt;
};

/// Everything one camera contributes to a clip: T aligned RGB frames, depth
/// maps, proposal masks (possibly corrupted), and clean reference masks.
struct ViewData {
  int id = 0;
  CameraModel camera;
  std::vector<ColorImage> rgb;
  std::vector<DepthMap> depths;
  MaskSequence proposals;
  MaskSequence gt;
};

struct Dataset {
  DynamicPointScene scene;
  std::vector<double> timestamps;  // T frame times, equal to scene.frame_times
  std::vector<ViewData> views;
  QueryMeta query;
  /// View id excluded from supervision and used for held-out evaluation;
  /// -1 when the clip has no held-out view.
  int holdout_view = -1;
};

/// Writes manifest.json, scene.json, and views/view_NN/{camera.json, frames}.
/// Throws std::invalid_argument when the dataset is internally inconsistent
/// and DataError when a file cannot be written.
void save_dataset(const std::filesystem::path& root, const Dataset& data);

/// Loads everything the manifest references and cross-validates dimensions
/// and counts. Throws DataError with a path-specific message on any missing
/// file, malformed document, or mismatch.
Dataset load_dataset(const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Synthesis jobs: a scene recipe plus the corruption to apply to its proposal
// masks, loadable from JSON so benchmark clips are reproducible artifacts.
// ---------------------------------------------------------------------------

struct SynthJob {
  SceneSpec scene;
  CorruptionSpec corruption;
  bool corrupt = true;  // when false, proposals are the clean reference masks
  QueryMeta query;
  int holdout_view = -1;
};

void save_synth_job(const std::filesystem::path& path, const SynthJob& job);
SynthJob load_synth_job(const std::filesystem::path& path);

/// Renders the job's scene into a full dataset: per-view RGB/depth frames,
/// clean reference masks for the target object, and proposal masks produced
/// by the job's corruption recipe (hallucinating views swap in another
/// object's masks when the scene has one).
Dataset synthesize_dataset(const SynthJob& job);

}  // namespace pq
