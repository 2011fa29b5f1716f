#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "idip/dip.hpp"
#include "idip/network.hpp"

namespace idip {

struct RestorationConfig {
  NetworkConfig network{};
  AdamSettings adam{};
  int iterations_per_phase = 600;
  std::uint64_t seed = 0;
  double noise_perturbation = 0.0;

  void validate() const;
  friend bool operator==(const RestorationConfig&, const RestorationConfig&) = default;
};

/// Flat object with keys depth, channels, noise_channels, leaky_slope, lr,
/// beta1, beta2, eps, iterations_per_phase, seed, noise_perturbation.
/// Missing keys keep their defaults; unknown keys are rejected.
RestorationConfig config_from_json(const nlohmann::json& j, RestorationConfig base = {});
nlohmann::json config_to_json(const RestorationConfig& config);

RestorationConfig load_config(const std::filesystem::path& path);
void save_config(const RestorationConfig& config, const std::filesystem::path& path);

/// Environment variable naming the default config file for the CLI.
inline constexpr const char* kConfigEnvVar = "IDIP_CONFIG";

}  // namespace idip
