#pragma once

#include "pq4d/consensus.hpp"
#include "pq4d/field.hpp"

namespace pq {

/// Settings every stage falls back to when the matching command-line flag is
/// omitted. These are the benchmark settings.
ConsensusConfig default_consensus_config();
TrainConfig default_train_config();
double default_render_threshold();

/// Entry point behind the pq4d binary. Returns the process exit code:
/// 0 success, 1 usage error, 2 malformed or inconsistent data,
/// 3 consensus left no reliable supervision to lift.
int cli_main(int argc, const char* const* argv);

}  // namespace pq
