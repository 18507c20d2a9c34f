// Command-line surface: simulate, beampattern, oracle-eval, train, evaluate,
// gradcheck. Precedence for settings: flags > JSON config file > defaults.
#ifndef BEAMKIT_CLI_HPP
#define BEAMKIT_CLI_HPP

#include <string>
#include <vector>

#include "beamkit/sim.hpp"

namespace beamkit::cli {

int run(const std::vector<std::string>& args);

// Dataset directory layout helpers (manifest.json + per-scene WAV/JSON),
// shared by the commands and the test suites.
struct SceneFiles {
  int id = 0;
  std::string mixture;  // M-channel WAV path
  std::string clean;    // 1-channel WAV
  std::string noise;    // 1-channel WAV
  SceneSpec spec;
};

struct DatasetOnDisk {
  ArrayGeometry geometry;
  std::string bucket;
  std::vector<SceneFiles> scenes;
};

void save_dataset(const std::string& dir, const ArrayGeometry& geom,
                  const std::string& bucket, const std::vector<Scene>& scenes,
                  bool pcm16 = false);
DatasetOnDisk load_dataset_manifest(const std::string& dir);

}  // namespace beamkit::cli

#endif  // BEAMKIT_CLI_HPP
