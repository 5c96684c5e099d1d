// Regenerates the committed benchmark clips under fixtures/. Run with the
// output directory as the only argument; the cli test suite pins the emitted
// bytes, so regenerate and re-run the tests together if the recipe changes.
#include <filesystem>
#include <iostream>

#include "pq4d/io.hpp"
#include "pq4d/synth.hpp"

namespace {

pq::SynthJob fixture_job(int ring_views, int supervision_views) {
  pq::SynthJob job;
  job.scene = pq::two_spheres_scene(ring_views, 11);
  job.corruption = pq::two_spheres_corruption(supervision_views, 12);
  job.query.id = "two-spheres/mover";
  job.query.type = "action";
  job.query.prompt = "the sphere drifting slowly to the right";
  job.holdout_view = supervision_views;
  return job;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures OUTPUT_DIR\n";
    return 1;
  }
  const std::filesystem::path out = argv[1];
  std::filesystem::create_directories(out);
  pq::save_synth_job(out / "two_spheres_v8.json", fixture_job(9, 8));
  pq::save_synth_job(out / "two_spheres_v4.json", fixture_job(5, 4));
  std::cout << "wrote two_spheres_v8.json and two_spheres_v4.json to " << out << "\n";
  return 0;
}
