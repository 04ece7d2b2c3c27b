#include "vlce/models.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "vlce/error.hpp"
#include "vlce/io.hpp"
#include "vlce/prefetch.hpp"

namespace vlce {
namespace {

using nn::Tensor;

nn::Tensor image_row(std::span<const float> image, std::size_t expected_dim) {
  if (image.size() != expected_dim) {
    fail(ErrorKind::kShape, "image feature has " + std::to_string(image.size()) + " components, model expects " +
                                std::to_string(expected_dim));
  }
  return Tensor::from({1, expected_dim}, std::vector<double>(image.begin(), image.end()));
}

nn::Tensor embedding_tensor(std::size_t vocab_size, std::size_t dim, const EmbeddingMatrix* matrix, bool frozen) {
  if (matrix) {
    if (matrix->rows != vocab_size || matrix->dim != dim) {
      fail(ErrorKind::kConfig, "embedding matrix is " + std::to_string(matrix->rows) + "x" + std::to_string(matrix->dim) +
                                   ", model needs " + std::to_string(vocab_size) + "x" + std::to_string(dim));
    }
    return Tensor::from({vocab_size, dim}, std::vector<double>(matrix->values.begin(), matrix->values.end()), !frozen);
  }
  return Tensor::zeros({vocab_size, dim}, !frozen);
}

// Output layers start an order of magnitude below Glorot so an untrained
// model predicts close to uniform.
nn::Dense output_layer(std::size_t in, std::size_t out, Rng& rng) {
  auto d = nn::Dense::create(in, out, rng);
  for (auto& w : d.weight.mutable_data()) w *= 0.1;
  return d;
}

void check_tokens(std::span<const std::int32_t> tokens, std::size_t vocab_size) {
  if (tokens.empty()) fail(ErrorKind::kShape, "empty token sequence");
  for (auto t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
      fail(ErrorKind::kVocab, "token index " + std::to_string(t) + " outside 0.." + std::to_string(vocab_size - 1));
    }
  }
}

std::vector<double> last_row(const Tensor& logits) {
  const std::size_t v = logits.dim(1);
  auto d = logits.data();
  return std::vector<double>(d.end() - static_cast<std::ptrdiff_t>(v), d.end());
}

}  // namespace

// ---- configs ----------------------------------------------------------------

void TransformerConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, "transformer: " + m); };
  if (model_dim == 0 || image_dim == 0 || layers == 0 || heads == 0) bad("dimensions must be positive");
  if (model_dim != emb_dim) bad("model_dim (" + std::to_string(model_dim) + ") must equal emb_dim (" + std::to_string(emb_dim) + ")");
  if (model_dim % heads) bad("model_dim not divisible by heads");
  if (regional_patches == 0 || model_dim % regional_patches) bad("model_dim not divisible by regional_patches");
  if (local_patches == 0 || model_dim % local_patches) bad("model_dim not divisible by local_patches");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must lie in [0, 1)");
}

void LstmConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, "lstm: " + m); };
  if (image_dim == 0 || emb_dim == 0 || hidden == 0 || fusion_dim == 0) bad("dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must lie in [0, 1)");
}

// ---- batches ----------------------------------------------------------------

std::span<const float> Batch::image(std::size_t b) const {
  return std::span<const float>(image_features).subspan(b * image_dim, image_dim);
}

std::size_t Batch::length(std::size_t b) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < seq_len; ++t) n += mask[b * seq_len + t] != 0.0 ? 1 : 0;
  return n;
}

std::span<const std::int32_t> Batch::input_row(std::size_t b) const {
  return std::span<const std::int32_t>(inputs).subspan(b * seq_len, seq_len);
}

std::span<const std::int32_t> Batch::target_row(std::size_t b) const {
  return std::span<const std::int32_t>(targets).subspan(b * seq_len, seq_len);
}

std::vector<Batch> make_batches(const std::vector<CaptionRecord>& records, const FeatureStore& features,
                                const Vocabulary& vocab, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) fail(ErrorKind::kConfig, "batch size must be positive");
  for (const auto& r : records) {
    if (r.flagged() || !features.contains(r.image_id)) {
      fail(ErrorKind::kData, "record '" + r.image_id + "' is flagged or has no feature; filter it before batching");
    }
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  const std::size_t seq_len = vocab.max_seq_len() - 1;
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    Batch b;
    b.size = n;
    b.seq_len = seq_len;
    b.image_dim = features.dim();
    b.inputs.assign(n * seq_len, Vocabulary::kPadIndex);
    b.targets.assign(n * seq_len, Vocabulary::kPadIndex);
    b.mask.assign(n * seq_len, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& rec = records[order[start + k]];
      b.ids.push_back(rec.image_id);
      auto img = features.at(rec.image_id);
      b.image_features.insert(b.image_features.end(), img.begin(), img.end());
      const auto seq = encode_caption(vocab, rec.clean_tokens);  // length <= max_seq_len
      for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
        b.inputs[k * seq_len + t] = seq[t];
        b.targets[k * seq_len + t] = seq[t + 1];
        b.mask[k * seq_len + t] = 1.0;
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

nn::Tensor CaptionModel::batch_loss(const Batch& batch, bool train, std::uint64_t dropout_seed) const {
  Rng rng(dropout_seed);
  std::vector<Tensor> logits;
  std::vector<std::int32_t> targets;
  for (std::size_t b = 0; b < batch.size; ++b) {
    const std::size_t len = batch.length(b);
    if (len == 0) continue;
    logits.push_back(sequence_logits(batch.image(b), batch.input_row(b).first(len), train, rng));
    auto tgt = batch.target_row(b).first(len);
    targets.insert(targets.end(), tgt.begin(), tgt.end());
  }
  if (logits.empty()) fail(ErrorKind::kData, "degenerate batch: every position is masked");
  const Tensor all = logits.size() == 1 ? logits.front() : nn::concat(logits, 0);
  const std::vector<double> mask(targets.size(), 1.0);
  return nn::masked_cross_entropy(all, targets, mask);
}

// ---- transformer ------------------------------------------------------------

TransformerCaptioner::TransformerCaptioner(TransformerConfig config, std::size_t vocab_size,
                                           const EmbeddingMatrix* embeddings, std::uint64_t seed)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  const std::size_t d = config_.model_dim;
  Rng rng(seed);
  embedding = embedding_tensor(vocab_size, config_.emb_dim, embeddings, config_.embedding_frozen);
  global_proj = nn::Dense::create(config_.image_dim, d, rng);
  regional_proj = nn::Dense::create(config_.image_dim, d, rng);
  regional_expand = nn::Dense::create(d / config_.regional_patches, d, rng);
  local_proj = nn::Dense::create(config_.image_dim, d, rng);
  local_expand = nn::Dense::create(d / config_.local_patches, d, rng);
  visual_norm = nn::LayerNorm::create(d);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Layer layer;
    layer.self_attention = nn::AttentionWeights::create(d, rng);
    layer.self_norm = nn::LayerNorm::create(d);
    layer.cross_attention = nn::AttentionWeights::create(d, rng);
    layer.cross_norm = nn::LayerNorm::create(d);
    layer.ffn_in = nn::Dense::create(d, config_.ffn_width(), rng);
    layer.ffn_out = nn::Dense::create(config_.ffn_width(), d, rng);
    layer.ffn_norm = nn::LayerNorm::create(d);
    layers.push_back(std::move(layer));
  }
  head_norm = nn::LayerNorm::create(2 * d);
  head = output_layer(2 * d, vocab_size, rng);
}

nn::ParameterList TransformerCaptioner::parameters() const {
  nn::ParameterList out;
  out.push_back({"embedding", embedding});
  global_proj.collect("visual/global", out);
  regional_proj.collect("visual/regional", out);
  regional_expand.collect("visual/regional_expand", out);
  local_proj.collect("visual/local", out);
  local_expand.collect("visual/local_expand", out);
  visual_norm.collect("visual/norm", out);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto p = "decoder/" + std::to_string(l);
    layers[l].self_attention.collect(p + "/self_attention", out);
    layers[l].self_norm.collect(p + "/self_norm", out);
    layers[l].cross_attention.collect(p + "/cross_attention", out);
    layers[l].cross_norm.collect(p + "/cross_norm", out);
    layers[l].ffn_in.collect(p + "/ffn_in", out);
    layers[l].ffn_out.collect(p + "/ffn_out", out);
    layers[l].ffn_norm.collect(p + "/ffn_norm", out);
  }
  head_norm.collect("head/norm", out);
  head.collect("head/output", out);
  return out;
}

nn::Tensor TransformerCaptioner::encode_visual(std::span<const float> image) const {
  const Tensor img = image_row(image, config_.image_dim);
  const std::size_t d = config_.model_dim;
  const Tensor global = nn::relu(global_proj(img));
  const Tensor regional =
      regional_expand(nn::reshape(nn::relu(regional_proj(img)), {config_.regional_patches, d / config_.regional_patches}));
  const Tensor local =
      local_expand(nn::reshape(nn::relu(local_proj(img)), {config_.local_patches, d / config_.local_patches}));
  return visual_norm(nn::concat({global, regional, local}, 0));
}

nn::Tensor TransformerCaptioner::decode(std::span<const std::int32_t> tokens, const Tensor& memory, bool train,
                                        Rng& dropout_rng) const {
  check_tokens(tokens, vocab_size_);
  const std::size_t steps = tokens.size();
  const std::size_t d = config_.model_dim;
  const double p = config_.dropout;
  Tensor x = nn::add(nn::embedding_lookup(embedding, tokens), nn::sinusoidal_positions(steps, d));
  x = nn::dropout(x, p, dropout_rng.next_u64(), train);
  const auto mask = nn::causal_mask(steps);
  for (const auto& layer : layers) {
    Tensor a = nn::multi_head_attention(x, x, layer.self_attention, config_.heads, mask);
    x = layer.self_norm(nn::add(x, nn::dropout(a, p, dropout_rng.next_u64(), train)));
    a = nn::multi_head_attention(x, memory, layer.cross_attention, config_.heads);
    x = layer.cross_norm(nn::add(x, nn::dropout(a, p, dropout_rng.next_u64(), train)));
    const Tensor f = layer.ffn_out(nn::relu(layer.ffn_in(x)));
    x = layer.ffn_norm(nn::add(x, nn::dropout(f, p, dropout_rng.next_u64(), train)));
  }
  const Tensor context = nn::repeat_rows(nn::mean(memory, 0), steps);
  return head(head_norm(nn::concat({x, context}, 1)));
}

nn::Tensor TransformerCaptioner::sequence_logits(std::span<const float> image, std::span<const std::int32_t> tokens,
                                                 bool train, Rng& dropout_rng) const {
  return decode(tokens, encode_visual(image), train, dropout_rng);
}

std::vector<double> TransformerCaptioner::next_token_logits(std::span<const float> image,
                                                            std::span<const std::int32_t> prefix) const {
  Rng unused(0);
  return last_row(sequence_logits(image, prefix, false, unused));
}

std::string TransformerCaptioner::config_json() const {
  nlohmann::ordered_json j;
  j["image_dim"] = config_.image_dim;
  j["model_dim"] = config_.model_dim;
  j["emb_dim"] = config_.emb_dim;
  j["layers"] = config_.layers;
  j["heads"] = config_.heads;
  j["ffn_dim"] = config_.ffn_width();
  j["regional_patches"] = config_.regional_patches;
  j["local_patches"] = config_.local_patches;
  j["dropout"] = config_.dropout;
  j["max_seq_len"] = config_.max_seq_len;
  j["embedding_frozen"] = config_.embedding_frozen;
  return j.dump();
}

// ---- lstm -------------------------------------------------------------------

LstmCaptioner::LstmCaptioner(LstmConfig config, std::size_t vocab_size, const EmbeddingMatrix* embeddings,
                             std::uint64_t seed)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  Rng rng(seed);
  embedding = embedding_tensor(vocab_size, config_.emb_dim, embeddings, config_.embedding_frozen);
  image_proj = nn::Dense::create(config_.image_dim, config_.hidden, rng);
  lstm = nn::LstmWeights::create(config_.emb_dim, config_.hidden, rng);
  fusion = nn::Dense::create(config_.hidden, config_.fusion_dim, rng);
  head = output_layer(config_.fusion_dim, vocab_size, rng);
}

nn::ParameterList LstmCaptioner::parameters() const {
  nn::ParameterList out;
  out.push_back({"embedding", embedding});
  image_proj.collect("image/dense", out);
  lstm.collect("text/lstm", out);
  fusion.collect("fusion/dense", out);
  head.collect("head/output", out);
  return out;
}

nn::Tensor LstmCaptioner::sequence_logits(std::span<const float> image, std::span<const std::int32_t> tokens, bool train,
                                          Rng& dropout_rng) const {
  check_tokens(tokens, vocab_size_);
  const double p = config_.dropout;
  const Tensor img = nn::dropout(image_row(image, config_.image_dim), p, dropout_rng.next_u64(), train);
  const Tensor image_features = nn::relu(image_proj(img));
  const Tensor words = nn::dropout(nn::embedding_lookup(embedding, tokens), p, dropout_rng.next_u64(), train);
  const auto text = nn::lstm_forward(words, lstm);
  // Row t fuses the image with the state after reading tokens[0..t], i.e. the
  // single-step prediction for that prefix.
  const Tensor fused = nn::add(text.outputs, image_features);
  return head(nn::relu(fusion(fused)));
}

std::vector<double> LstmCaptioner::next_token_logits(std::span<const float> image,
                                                     std::span<const std::int32_t> prefix) const {
  Rng unused(0);
  return last_row(sequence_logits(image, prefix, false, unused));
}

std::vector<double> LstmCaptioner::predict(std::span<const float> image, std::span<const std::int32_t> prefix) const {
  auto logits = next_token_logits(image, prefix);
  const std::size_t n = logits.size();
  const Tensor probs = nn::softmax(Tensor::from({n}, std::move(logits)), 0);
  return std::vector<double>(probs.data().begin(), probs.data().end());
}

std::string LstmCaptioner::config_json() const {
  nlohmann::ordered_json j;
  j["image_dim"] = config_.image_dim;
  j["emb_dim"] = config_.emb_dim;
  j["hidden"] = config_.hidden;
  j["fusion_dim"] = config_.fusion_dim;
  j["dropout"] = config_.dropout;
  j["max_seq_len"] = config_.max_seq_len;
  j["embedding_frozen"] = config_.embedding_frozen;
  return j.dump();
}

// ---- training ---------------------------------------------------------------

void TrainSchedule::validate() const {
  if (batch_size == 0) fail(ErrorKind::kConfig, "batch_size must be positive");
  if (phase1.learning_rate < 0.0 || phase2.learning_rate < 0.0) fail(ErrorKind::kConfig, "learning rates must be >= 0");
  if (phase1.epochs > 0 && phase2.epochs > 0 && !(phase2.learning_rate < phase1.learning_rate)) {
    fail(ErrorKind::kConfig, "phase 2 learning rate must be below phase 1's");
  }
}

TrainResult train(CaptionModel& model, const TrainSchedule& schedule, const TrainingData& data,
                  const PhaseCallback& on_phase_end) {
  schedule.validate();
  if (data.features.dim() != model.image_dim()) {
    fail(ErrorKind::kConfig, "feature dim " + std::to_string(data.features.dim()) + " does not match model image dim " +
                                 std::to_string(model.image_dim()));
  }
  if (data.vocab.index_space() != model.vocab_size()) fail(ErrorKind::kConfig, "vocabulary does not match model");
  if (data.records.empty()) fail(ErrorKind::kData, "no training records");

  auto params = model.parameters();
  nn::Adam adam(nn::AdamConfig{schedule.phase1.learning_rate});
  TrainResult result;

  auto epoch_batches = [&](std::size_t epoch) {
    return make_batches(data.records, data.features, data.vocab, schedule.batch_size,
                        splitmix64(schedule.seed ^ (0x5bd1e995ULL * (epoch + 1))));
  };

  {
    // Epoch 0: the untrained model in inference mode.
    double total = 0.0, tokens = 0.0;
    for (const auto& batch : epoch_batches(0)) {
      const auto loss = model.batch_loss(batch, false, 0);
      double n = 0.0;
      for (double m : batch.mask) n += m;
      total += loss.item() * n;
      tokens += n;
    }
    result.curve.push_back({0, 0, total / tokens});
  }

  std::size_t epoch = 0;
  const TrainPhase phases[2] = {schedule.phase1, schedule.phase2};
  for (int phase = 1; phase <= 2 && !result.stopped_early; ++phase) {
    const auto& ph = phases[phase - 1];
    if (ph.epochs == 0) continue;
    adam.set_learning_rate(ph.learning_rate);
    for (std::size_t e = 0; e < ph.epochs; ++e) {
      ++epoch;
      PrefetchQueue<Batch> queue(schedule.prefetch, [&, epoch] { return epoch_batches(epoch); });
      double total = 0.0, tokens = 0.0;
      std::size_t batch_index = 0;
      while (auto batch = queue.pop()) {
        nn::zero_grads(params);
        const auto step_seed = splitmix64(schedule.seed + 0x9e3779b97f4a7c15ULL * (result.steps + 1));
        auto loss = model.batch_loss(*batch, true, step_seed);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          fail(ErrorKind::kNumeric, "loss is " + io::format_double(value) + " at step " + std::to_string(result.steps + 1) +
                                        " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                                        ", first id '" + (batch->ids.empty() ? "" : batch->ids.front()) + "')");
        }
        loss.backward();
        adam.step(params);
        ++result.steps;
        double n = 0.0;
        for (double m : batch->mask) n += m;
        total += value * n;
        tokens += n;
        ++batch_index;
      }
      const double epoch_loss = total / tokens;
      result.curve.push_back({epoch, phase, epoch_loss});
      if (schedule.target_loss > 0.0 && epoch_loss < schedule.target_loss) {
        result.stopped_early = true;
        break;
      }
    }
    if (on_phase_end) on_phase_end(phase, adam);
  }
  nn::zero_grads(params);
  return result;
}

std::vector<std::string> generate_caption(const CaptionModel& model, std::span<const float> image,
                                          const Vocabulary& vocab, std::size_t max_len) {
  std::vector<std::int32_t> seq{vocab.start_index()};
  std::vector<std::string> words;
  const auto start = vocab.start_index();
  const auto end = vocab.end_index();
  while (words.size() < max_len) {
    const auto logits = model.next_token_logits(image, seq);
    std::int32_t best = -1;
    double best_value = 0.0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
      const auto idx = static_cast<std::int32_t>(i);
      if (idx == start) continue;
      if (best < 0 || logits[i] > best_value) {
        best = idx;
        best_value = logits[i];
      }
    }
    if (best < 0 || best == end) break;
    seq.push_back(best);
    words.push_back(vocab.word(best));
  }
  return words;
}

void save_model(const CaptionModel& model, const std::filesystem::path& dir, const std::string& extra_metadata) {
  nlohmann::ordered_json meta;
  meta["kind"] = model.kind();
  meta["vocab_size"] = model.vocab_size();
  meta["config"] = nlohmann::ordered_json::parse(model.config_json());
  meta["extra"] = nlohmann::ordered_json::parse(extra_metadata);
  nn::save_parameters(model.parameters(), dir / "model.vlcf", dir / "model.json", meta.dump());
}

std::unique_ptr<CaptionModel> load_model(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_file(dir / "model.json")).at("metadata");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, (dir / "model.json").string() + ": " + e.what());
  }
  const auto kind = meta.at("kind").get<std::string>();
  const auto vocab_size = meta.at("vocab_size").get<std::size_t>();
  const auto& c = meta.at("config");
  std::unique_ptr<CaptionModel> model;
  if (kind == "transformer") {
    TransformerConfig cfg;
    cfg.image_dim = c.at("image_dim");
    cfg.model_dim = c.at("model_dim");
    cfg.emb_dim = c.at("emb_dim");
    cfg.layers = c.at("layers");
    cfg.heads = c.at("heads");
    cfg.ffn_dim = c.at("ffn_dim");
    cfg.regional_patches = c.at("regional_patches");
    cfg.local_patches = c.at("local_patches");
    cfg.dropout = c.at("dropout");
    cfg.max_seq_len = c.at("max_seq_len");
    cfg.embedding_frozen = c.at("embedding_frozen");
    model = std::make_unique<TransformerCaptioner>(cfg, vocab_size, nullptr, 0);
  } else if (kind == "lstm") {
    LstmConfig cfg;
    cfg.image_dim = c.at("image_dim");
    cfg.emb_dim = c.at("emb_dim");
    cfg.hidden = c.at("hidden");
    cfg.fusion_dim = c.at("fusion_dim");
    cfg.dropout = c.at("dropout");
    cfg.max_seq_len = c.at("max_seq_len");
    cfg.embedding_frozen = c.at("embedding_frozen");
    model = std::make_unique<LstmCaptioner>(cfg, vocab_size, nullptr, 0);
  } else {
    fail(ErrorKind::kFormat, "unknown model kind '" + kind + "'");
  }
  auto params = model->parameters();
  nn::load_parameters(params, dir / "model.vlcf");
  return model;
}

std::string loss_curve_csv(const std::vector<LossRecord>& curve) {
  std::string out = "epoch,phase,loss\n";
  for (const auto& r : curve) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.phase) + "," + io::format_double(r.loss) + "\n";
  }
  return out;
}

}  // namespace vlce
