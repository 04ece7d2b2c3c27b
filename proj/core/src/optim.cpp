#include "vlce/optim.hpp"

#include <cmath>

#include <json.hpp>

#include "vlce/error.hpp"
#include "vlce/feature_store.hpp"
#include "vlce/io.hpp"

namespace vlce::nn {
namespace {

void append_chunks(FeatureStore& store, const std::string& name, std::span<const double> values) {
  std::vector<float> chunk(kCheckpointChunk);
  for (std::size_t off = 0; off < values.size(); off += kCheckpointChunk) {
    std::fill(chunk.begin(), chunk.end(), 0.0f);
    const std::size_t n = std::min<std::size_t>(kCheckpointChunk, values.size() - off);
    for (std::size_t i = 0; i < n; ++i) chunk[i] = static_cast<float>(values[off + i]);
    store.add(name + "@" + std::to_string(off), chunk);
  }
}

void read_chunks(const FeatureStore& store, const std::string& name, std::span<double> values) {
  for (std::size_t off = 0; off < values.size(); off += kCheckpointChunk) {
    auto row = store.find(name + "@" + std::to_string(off));
    if (!row) fail(ErrorKind::kData, "checkpoint lacks '" + name + "' at offset " + std::to_string(off));
    const std::size_t n = std::min<std::size_t>(kCheckpointChunk, values.size() - off);
    for (std::size_t i = 0; i < n; ++i) values[off + i] = static_cast<double>((*row)[i]);
  }
}

}  // namespace

void Adam::step(ParameterList& params) {
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (auto& p : params) {
    if (!p.value.requires_grad()) continue;
    auto values = p.value.mutable_data();
    auto grad = p.value.grad();
    auto& m = moments_[p.name];
    if (m.first.size() != values.size()) {
      m.first.assign(values.size(), 0.0);
      m.second.assign(values.size(), 0.0);
    }
    if (grad.empty()) continue;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m.first[i] = b1 * m.first[i] + (1.0 - b1) * g;
      m.second[i] = b2 * m.second[i] + (1.0 - b2) * g * g;
      const double m_hat = m.first[i] / correction1;
      const double v_hat = m.second[i] / correction2;
      values[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void zero_grads(ParameterList& params) {
  for (auto& p : params) p.value.zero_grad();
}

void save_parameters(const ParameterList& params, const std::filesystem::path& vlcf_path,
                     const std::filesystem::path& sidecar_path, const std::string& metadata_json) {
  FeatureStore store(kCheckpointChunk);
  nlohmann::ordered_json j;
  j["chunk"] = kCheckpointChunk;
  auto list = nlohmann::ordered_json::array();
  for (const auto& p : params) {
    append_chunks(store, p.name, p.value.data());
    list.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"trainable", p.value.requires_grad()}});
  }
  j["parameters"] = std::move(list);
  j["metadata"] = nlohmann::ordered_json::parse(metadata_json);
  save_feature_store(store, vlcf_path);
  io::write_file(sidecar_path, j.dump(2) + "\n");
}

void load_parameters(ParameterList& params, const std::filesystem::path& vlcf_path) {
  const auto store = load_feature_store(vlcf_path);
  if (store.dim() != kCheckpointChunk) fail(ErrorKind::kData, vlcf_path.string() + ": unexpected chunk width");
  std::size_t expected = 0;
  for (auto& p : params) {
    expected += (p.value.numel() + kCheckpointChunk - 1) / kCheckpointChunk;
    read_chunks(store, p.name, p.value.mutable_data());
  }
  if (expected != store.size()) {
    fail(ErrorKind::kData, vlcf_path.string() + ": " + std::to_string(store.size()) + " chunks, model needs " +
                               std::to_string(expected));
  }
}

void save_optimizer(const Adam& adam, const std::filesystem::path& json_path, const std::filesystem::path& moments_path) {
  nlohmann::ordered_json j;
  j["steps"] = adam.steps();
  j["learning_rate"] = adam.config().learning_rate;
  j["beta1"] = adam.config().beta1;
  j["beta2"] = adam.config().beta2;
  j["eps"] = adam.config().eps;
  auto names = nlohmann::ordered_json::array();
  FeatureStore store(kCheckpointChunk);
  for (const auto& [name, m] : adam.moments()) {
    names.push_back({{"name", name}, {"size", m.first.size()}});
    append_chunks(store, "m:" + name, m.first);
    append_chunks(store, "v:" + name, m.second);
  }
  j["moments"] = std::move(names);
  io::write_file(json_path, j.dump(2) + "\n");
  save_feature_store(store, moments_path);
}

Adam load_optimizer(const std::filesystem::path& json_path, const std::filesystem::path& moments_path) {
  try {
    auto j = nlohmann::json::parse(io::read_file(json_path));
    AdamConfig cfg;
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.beta1 = j.at("beta1").get<double>();
    cfg.beta2 = j.at("beta2").get<double>();
    cfg.eps = j.at("eps").get<double>();
    Adam adam(cfg);
    adam.set_steps(j.at("steps").get<std::uint64_t>());
    const auto store = load_feature_store(moments_path);
    for (const auto& entry : j.at("moments")) {
      const auto name = entry.at("name").get<std::string>();
      const auto size = entry.at("size").get<std::size_t>();
      auto& m = adam.moments()[name];
      m.first.assign(size, 0.0);
      m.second.assign(size, 0.0);
      read_chunks(store, "m:" + name, m.first);
      read_chunks(store, "v:" + name, m.second);
    }
    return adam;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, json_path.string() + ": " + e.what());
  }
}

}  // namespace vlce::nn
