#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vlce/layers.hpp"

namespace vlce::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;
};

// Bias-corrected Adam. Moments are keyed by parameter name and created on the
// first step that sees the parameter.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return step_; }

  // Updates every parameter that requires grad, reading its accumulated
  // gradient. Parameters without a gradient are treated as zero-gradient.
  void step(ParameterList& params);

  const std::map<std::string, AdamMoments>& moments() const { return moments_; }
  std::map<std::string, AdamMoments>& moments() { return moments_; }
  void set_steps(std::uint64_t steps) { step_ = steps; }

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::map<std::string, AdamMoments> moments_;
};

void zero_grads(ParameterList& params);

// Parameters are flattened, cut into kCheckpointChunk-wide VLCF records with
// ids "<name>@<offset>" (last chunk zero-padded), and described by a JSON
// sidecar listing names and shapes plus any caller metadata.
inline constexpr std::uint32_t kCheckpointChunk = 256;

void save_parameters(const ParameterList& params, const std::filesystem::path& vlcf_path,
                     const std::filesystem::path& sidecar_path, const std::string& metadata_json = "{}");
// Copies stored values into the given parameters (matched by name and shape).
// kData on any missing name or shape mismatch.
void load_parameters(ParameterList& params, const std::filesystem::path& vlcf_path);

// Optimizer scalars go to the JSON file; moments to a VLCF with the same
// chunking as save_parameters ("m:<name>@<offset>", "v:<name>@<offset>").
void save_optimizer(const Adam& adam, const std::filesystem::path& json_path, const std::filesystem::path& moments_path);
Adam load_optimizer(const std::filesystem::path& json_path, const std::filesystem::path& moments_path);

}  // namespace vlce::nn
