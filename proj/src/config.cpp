#include "idip/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace idip {

void RestorationConfig::validate() const {
  network.validate();
  if (!(adam.lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw std::invalid_argument("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (iterations_per_phase < 1) throw std::invalid_argument("iterations_per_phase must be >= 1");
  if (noise_perturbation < 0.0) throw std::invalid_argument("noise_perturbation must be >= 0");
}

RestorationConfig config_from_json(const nlohmann::json& j, RestorationConfig base) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  static const std::set<std::string> known = {"depth", "channels", "noise_channels", "leaky_slope",
                                              "lr", "beta1", "beta2", "eps", "iterations_per_phase",
                                              "seed", "noise_perturbation"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  try {
    auto& c = base;
    if (j.contains("depth")) c.network.depth = j.at("depth").get<std::size_t>();
    if (j.contains("channels")) c.network.channels = j.at("channels").get<std::vector<std::size_t>>();
    if (j.contains("noise_channels")) c.network.noise_channels = j.at("noise_channels").get<std::size_t>();
    if (j.contains("leaky_slope")) c.network.leaky_slope = j.at("leaky_slope").get<double>();
    if (j.contains("lr")) c.adam.lr = j.at("lr").get<double>();
    if (j.contains("beta1")) c.adam.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) c.adam.beta2 = j.at("beta2").get<double>();
    if (j.contains("eps")) c.adam.eps = j.at("eps").get<double>();
    if (j.contains("iterations_per_phase")) c.iterations_per_phase = j.at("iterations_per_phase").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("noise_perturbation")) c.noise_perturbation = j.at("noise_perturbation").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  base.validate();
  return base;
}

nlohmann::json config_to_json(const RestorationConfig& c) {
  nlohmann::ordered_json j;
  j["depth"] = c.network.depth;
  j["channels"] = c.network.channels;
  j["noise_channels"] = c.network.noise_channels;
  j["leaky_slope"] = c.network.leaky_slope;
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["eps"] = c.adam.eps;
  j["iterations_per_phase"] = c.iterations_per_phase;
  j["seed"] = c.seed;
  j["noise_perturbation"] = c.noise_perturbation;
  return j;
}

RestorationConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void save_config(const RestorationConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write config file " + path.string());
  out << config_to_json(config).dump(2) << '\n';
}

}  // namespace idip
