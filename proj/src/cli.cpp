#include "pq4d/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "pq4d/errors.hpp"
#include "pq4d/eval.hpp"
#include "pq4d/io.hpp"
#include "pq4d/rng.hpp"

namespace pq {
namespace {

namespace fs = std::filesystem;

std::string frame_name(const char* stem, int frame) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d.pgm", stem, frame);
  return buf;
}

std::string view_dir_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%02d", id);
  return buf;
}

const ViewData& find_view(const Dataset& data, int id) {
  for (const ViewData& view : data.views) {
    if (view.id == id) return view;
  }
  throw DataError("view " + std::to_string(id) + " is not part of the dataset");
}

// The views that act as supervision: everything except the held-out view.
struct SupervisionSlice {
  std::vector<MaskSequence> sequences;
  std::vector<std::vector<DepthMap>> depths;
  std::vector<CameraModel> cameras;
  std::vector<int> view_ids;
};

SupervisionSlice supervision_slice(const Dataset& data) {
  SupervisionSlice slice;
  for (const ViewData& view : data.views) {
    if (view.id == data.holdout_view) continue;
    slice.sequences.push_back(view.proposals);
    slice.depths.push_back(view.depths);
    slice.cameras.push_back(view.camera);
    slice.view_ids.push_back(view.id);
  }
  return slice;
}

ConsensusReport consensus_stage(const Dataset& data, const ConsensusConfig& config) {
  const SupervisionSlice slice = supervision_slice(data);
  if (slice.sequences.size() < 2) {
    throw DataError("dataset has fewer than two supervision views; nothing to vote on");
  }
  return run_consensus(slice.sequences, slice.depths, slice.cameras, config);
}

// Trains on the proposal masks of the views the report marked reliable.
TrainResult lift_stage(const Dataset& data, const ConsensusReport& report,
                       const TrainConfig& config) {
  const SupervisionSlice slice = supervision_slice(data);
  if (report.view_ids != slice.view_ids) {
    throw DataError("report views do not match the dataset supervision views");
  }
  std::vector<SupervisionView> reliable;
  for (std::size_t i = 0; i < slice.view_ids.size(); ++i) {
    if (report.reliable[i]) reliable.push_back({slice.cameras[i], slice.sequences[i]});
  }
  if (reliable.empty()) {
    throw NoReliableEvidence("consensus marked no supervision view reliable");
  }
  return train(data.scene, reliable, config);
}

// One evaluation record from a directory of predicted masks and a directory
// holding ground truth under the same file names.
QueryRecord record_from_directories(const fs::path& pred_dir, const fs::path& gt_dir,
                                    const std::string& id, const std::string& type) {
  if (!fs::is_directory(pred_dir)) {
    throw DataError(pred_dir.string() + ": not a directory of predicted masks");
  }
  std::vector<std::string> names;
  for (const fs::directory_entry& entry : fs::directory_iterator(pred_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) {
    throw DataError(pred_dir.string() + ": contains no .pgm predictions");
  }

  QueryRecord record;
  record.id = id;
  record.type = parse_query_type(type);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const fs::path gt_file = gt_dir / names[i];
    if (!fs::exists(gt_file)) {
      throw DataError(gt_file.string() + ": missing ground truth for prediction " + names[i]);
    }
    record.test_frames.push_back(static_cast<int>(i));
    record.predicted.push_back(load_pgm(pred_dir / names[i]));
    record.ground_truth.push_back(load_pgm(gt_file));
  }
  return record;
}

void create_directory_checked(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Renders the field into per-frame masks for one view and writes them (and
// the matching ground truth) under pred/<view>/ and gt/<view>/.
void write_view_masks(const fs::path& out, const Dataset& data, const IdentityField& field,
                      const ViewData& view, double threshold) {
  const fs::path pred_dir = out / "pred" / view_dir_name(view.id);
  const fs::path gt_dir = out / "gt" / view_dir_name(view.id);
  create_directory_checked(pred_dir);
  create_directory_checked(gt_dir);
  for (std::size_t t = 0; t < data.timestamps.size(); ++t) {
    const BinaryMask mask =
        query_mask(data.scene, field, view.camera, data.timestamps[t], threshold);
    save_pgm(pred_dir / frame_name("mask", static_cast<int>(t)), mask);
    save_pgm(gt_dir / frame_name("mask", static_cast<int>(t)), view.gt.frames[t]);
  }
}

struct PipelineOptions {
  std::string spec;
  std::string out;
  ConsensusConfig consensus = default_consensus_config();
  TrainConfig training = default_train_config();
  double threshold = default_render_threshold();
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int run_pipeline(const PipelineOptions& opt) {
  SynthJob job = load_synth_job(opt.spec);
  TrainConfig training = opt.training;
  if (opt.seed_given) {
    // One user-facing seed fans out to decorrelated per-stage streams.
    job.scene.seed = derive_seed(opt.seed, 0);
    job.corruption.seed = derive_seed(opt.seed, 1);
    training.seed = derive_seed(opt.seed, 2);
  }
  const fs::path out(opt.out);
  create_directory_checked(out);

  const Dataset data = synthesize_dataset(job);
  save_dataset(out / "dataset", data);

  const ConsensusReport report = consensus_stage(data, opt.consensus);
  save_report(out / "report.json", report);
  int reliable_count = 0;
  for (std::uint8_t r : report.reliable) reliable_count += r != 0;
  std::cout << "consensus: " << reliable_count << "/" << report.num_views
            << " supervision views reliable\n";

  const TrainResult trained = lift_stage(data, report, training);
  save_field(out / "field.json", trained.field);

  // Held-out evaluation; without a held-out view, every view is scored.
  std::vector<const ViewData*> eval_views;
  if (data.holdout_view != -1) {
    eval_views.push_back(&find_view(data, data.holdout_view));
  } else {
    for (const ViewData& view : data.views) eval_views.push_back(&view);
  }
  std::vector<QueryRecord> records;
  for (const ViewData* view : eval_views) {
    write_view_masks(out, data, trained.field, *view, opt.threshold);
    records.push_back(record_from_directories(out / "pred" / view_dir_name(view->id),
                                              out / "gt" / view_dir_name(view->id),
                                              data.query.id + "/" + view_dir_name(view->id),
                                              data.query.type));
  }
  const MetricsTable metrics = aggregate_by_type(records);
  save_metrics(out / "metrics.json", metrics);
  std::cout << "mIoU " << metrics.overall.miou << " over " << records.size()
            << " held-out view(s)\n";
  return 0;
}

}  // namespace

ConsensusConfig default_consensus_config() { return ConsensusConfig{}; }

TrainConfig default_train_config() { return TrainConfig{}; }

double default_render_threshold() { return 0.5; }

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Query-driven 4D grounding: synthesize clips, vote on proposal masks, "
               "lift the survivors into an identity field, and evaluate held-out renders"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // synth
  std::string spec_path, out_path;
  CLI::App* synth = app.add_subcommand("synth", "Generate a dataset from a scene job file");
  synth->add_option("--spec", spec_path, "Scene job JSON file")->required();
  synth->add_option("--out", out_path, "Dataset directory to create")->required();

  // consensus
  std::string data_path, report_path;
  ConsensusConfig consensus_cfg = default_consensus_config();
  CLI::App* consensus = app.add_subcommand(
      "consensus", "Cross-view vote on the proposal masks of a dataset");
  consensus->add_option("--data", data_path, "Dataset directory")->required();
  consensus->add_option("--delta", consensus_cfg.delta, "Per-frame IoU for agreement")->capture_default_str();
  consensus->add_option("--epsilon", consensus_cfg.epsilon,
                        "Fraction of agreeing frames needed for a vote")->capture_default_str();
  consensus->add_option("--tau", consensus_cfg.tau, "Normalized vote share for reliability")->capture_default_str();
  consensus->add_option("--visibility", consensus_cfg.visibility_min,
                        "Mean overlap needed to count as a visible peer")->capture_default_str();
  consensus->add_option("--occlusion-tol", consensus_cfg.occlusion_tol,
                        "Relative depth slack during reprojection")->capture_default_str();
  consensus->add_option("--report", report_path, "Report JSON to write")->required();

  // lift
  std::string field_path;
  TrainConfig train_cfg = default_train_config();
  CLI::App* lift = app.add_subcommand(
      "lift", "Optimize the identity field on the reliable supervision views");
  lift->add_option("--data", data_path, "Dataset directory")->required();
  lift->add_option("--report", report_path, "Consensus report JSON")->required();
  lift->add_option("--iters", train_cfg.iterations, "Optimization steps")->capture_default_str();
  lift->add_option("--lr", train_cfg.learning_rate, "Learning rate")->capture_default_str();
  lift->add_option("--lambda2d", train_cfg.lambda_2d, "Rendered-mask loss weight")->capture_default_str();
  lift->add_option("--lambda3d", train_cfg.lambda_3d, "Neighbor-consistency loss weight")->capture_default_str();
  lift->add_option("--m", train_cfg.sample_count, "Gaussians sampled per consistency step")->capture_default_str();
  lift->add_option("--k", train_cfg.neighbor_count, "Neighbors per sampled Gaussian")->capture_default_str();
  lift->add_option("--seed", train_cfg.seed, "Optimization seed")->capture_default_str();
  lift->add_option("--out", field_path, "Field checkpoint JSON to write")->required();

  // render
  int view_id = 0, frame = 0;
  double threshold = default_render_threshold();
  std::string mask_path;
  CLI::App* render = app.add_subcommand(
      "render", "Render the field's query mask for one view and frame");
  render->add_option("--data", data_path, "Dataset directory")->required();
  render->add_option("--field", field_path, "Field checkpoint JSON")->required();
  render->add_option("--view", view_id, "View id to render")->required();
  render->add_option("--frame", frame, "Frame index to render")->required();
  render->add_option("--threshold", threshold, "Foreground probability threshold")->capture_default_str();
  render->add_option("--out", mask_path, "Mask PGM to write")->required();

  // eval
  std::string pred_path, gt_path, metrics_path;
  std::string query_id = "query", query_type = "attribute";
  CLI::App* eval = app.add_subcommand(
      "eval", "Score predicted masks against ground truth");
  eval->add_option("--pred", pred_path, "Directory of predicted .pgm masks")->required();
  eval->add_option("--gt", gt_path, "Directory of ground-truth .pgm masks")->required();
  eval->add_option("--id", query_id, "Query id recorded in the metrics")->capture_default_str();
  eval->add_option("--type", query_type, "Query category recorded in the metrics")->capture_default_str();
  eval->add_option("--out", metrics_path, "Metrics JSON to write")->required();

  // pipeline
  PipelineOptions pipe;
  CLI::App* pipeline = app.add_subcommand(
      "pipeline", "synth, consensus, lift, render, and eval in one run");
  pipeline->add_option("--spec", pipe.spec, "Scene job JSON file")->required();
  pipeline->add_option("--out", pipe.out, "Output directory")->required();
  pipeline->add_option("--delta", pipe.consensus.delta, "Per-frame IoU for agreement")->capture_default_str();
  pipeline->add_option("--epsilon", pipe.consensus.epsilon,
                       "Fraction of agreeing frames needed for a vote")->capture_default_str();
  pipeline->add_option("--tau", pipe.consensus.tau, "Normalized vote share for reliability")->capture_default_str();
  pipeline->add_option("--visibility", pipe.consensus.visibility_min,
                       "Mean overlap needed to count as a visible peer")->capture_default_str();
  pipeline->add_option("--occlusion-tol", pipe.consensus.occlusion_tol,
                       "Relative depth slack during reprojection")->capture_default_str();
  pipeline->add_option("--iters", pipe.training.iterations, "Optimization steps")->capture_default_str();
  pipeline->add_option("--lr", pipe.training.learning_rate, "Learning rate")->capture_default_str();
  pipeline->add_option("--lambda2d", pipe.training.lambda_2d, "Rendered-mask loss weight")->capture_default_str();
  pipeline->add_option("--lambda3d", pipe.training.lambda_3d,
                       "Neighbor-consistency loss weight")->capture_default_str();
  pipeline->add_option("--m", pipe.training.sample_count,
                       "Gaussians sampled per consistency step")->capture_default_str();
  pipeline->add_option("--k", pipe.training.neighbor_count, "Neighbors per sampled Gaussian")->capture_default_str();
  pipeline->add_option("--threshold", pipe.threshold, "Foreground probability threshold")->capture_default_str();
  CLI::Option* seed_opt =
      pipeline->add_option("--seed", pipe.seed, "Per-stage seeds derive from this")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      const Dataset data = synthesize_dataset(load_synth_job(spec_path));
      save_dataset(out_path, data);
      std::cout << "wrote " << data.views.size() << "-view dataset to " << out_path << "\n";
    } else if (*consensus) {
      const Dataset data = load_dataset(data_path);
      const ConsensusReport report = consensus_stage(data, consensus_cfg);
      save_report(report_path, report);
      int reliable_count = 0;
      for (std::uint8_t r : report.reliable) reliable_count += r != 0;
      std::cout << "consensus: " << reliable_count << "/" << report.num_views
                << " supervision views reliable\n";
    } else if (*lift) {
      const Dataset data = load_dataset(data_path);
      const LoadedReport loaded = load_report(report_path);
      if (!loaded.consistent) {
        throw DataError(report_path + ": report verdicts do not match its own evidence");
      }
      const TrainResult trained = lift_stage(data, loaded.report, train_cfg);
      save_field(field_path, trained.field);
      std::cout << "final loss " << trained.trace.back().total << " after "
                << trained.trace.size() << " steps\n";
    } else if (*render) {
      const Dataset data = load_dataset(data_path);
      const IdentityField field = load_field(field_path);
      const ViewData& view = find_view(data, view_id);
      if (frame < 0 || frame >= static_cast<int>(data.timestamps.size())) {
        throw DataError("frame " + std::to_string(frame) + " is outside 0.." +
                        std::to_string(data.timestamps.size() - 1));
      }
      const BinaryMask mask = query_mask(data.scene, field, view.camera,
                                         data.timestamps[static_cast<std::size_t>(frame)],
                                         threshold);
      save_pgm(mask_path, mask);
      std::cout << "wrote " << mask.count() << " foreground pixels to " << mask_path << "\n";
    } else if (*eval) {
      const QueryRecord record =
          record_from_directories(pred_path, gt_path, query_id, query_type);
      const MetricsTable metrics = aggregate_by_type({record});
      save_metrics(metrics_path, metrics);
      std::cout << "mIoU " << metrics.overall.miou << " over "
                << record.test_frames.size() << " frames\n";
    } else if (*pipeline) {
      pipe.seed_given = seed_opt->count() > 0;
      return run_pipeline(pipe);
    }
    return 0;
  } catch (const NoReliableEvidence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace pq
