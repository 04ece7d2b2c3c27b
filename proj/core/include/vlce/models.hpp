#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vlce/corpus.hpp"
#include "vlce/embeddings.hpp"
#include "vlce/feature_store.hpp"
#include "vlce/layers.hpp"
#include "vlce/optim.hpp"

namespace vlce {

struct TransformerConfig {
  std::size_t image_dim = 768;
  std::size_t model_dim = 300;
  std::size_t emb_dim = 300;
  std::size_t layers = 2;
  std::size_t heads = 6;
  std::size_t ffn_dim = 0;  // 0 = 4 * model_dim
  std::size_t regional_patches = 4;
  std::size_t local_patches = 12;
  double dropout = 0.1;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  bool embedding_frozen = true;

  std::size_t ffn_width() const { return ffn_dim ? ffn_dim : 4 * model_dim; }
  std::size_t memory_rows() const { return 1 + regional_patches + local_patches; }
  // kConfig on any broken invariant.
  void validate() const;
};

struct LstmConfig {
  std::size_t image_dim = 2048;
  std::size_t emb_dim = 300;
  std::size_t hidden = 256;
  std::size_t fusion_dim = 256;
  double dropout = 0.5;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  bool embedding_frozen = false;

  void validate() const;
};

// Teacher-forcing batch. Sequences are right-padded to seq_len with index 0.
struct Batch {
  std::size_t size = 0;
  std::size_t seq_len = 0;
  std::size_t image_dim = 0;
  std::vector<std::string> ids;
  std::vector<float> image_features;  // size x image_dim
  std::vector<std::int32_t> inputs;   // size x seq_len: [startseq, w1 .. w_{n}]
  std::vector<std::int32_t> targets;  // size x seq_len: [w1 .. w_{n}, endseq]
  std::vector<double> mask;           // size x seq_len, 1 on real positions

  std::span<const float> image(std::size_t b) const;
  std::size_t length(std::size_t b) const;  // real positions in row b
  std::span<const std::int32_t> input_row(std::size_t b) const;
  std::span<const std::int32_t> target_row(std::size_t b) const;
};

// Flagged records must be filtered out beforehand (kData otherwise). Epoch
// order is a seeded shuffle; the last batch may be short.
std::vector<Batch> make_batches(const std::vector<CaptionRecord>& records, const FeatureStore& features,
                                const Vocabulary& vocab, std::size_t batch_size, std::uint64_t seed);

class CaptionModel {
 public:
  virtual ~CaptionModel() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t image_dim() const = 0;
  virtual std::size_t vocab_size() const = 0;  // width of the output layer (index space)
  // Every parameter, frozen ones included (they report requires_grad() == false).
  virtual nn::ParameterList parameters() const = 0;
  // Per-position next-token logits for one sequence, (T x vocab_size).
  virtual nn::Tensor sequence_logits(std::span<const float> image, std::span<const std::int32_t> tokens, bool train,
                                     Rng& dropout_rng) const = 0;
  // Logits for the token following `prefix` (inference mode).
  virtual std::vector<double> next_token_logits(std::span<const float> image,
                                                std::span<const std::int32_t> prefix) const = 0;
  virtual std::string config_json() const = 0;

  // Mean masked cross-entropy over every real position of the batch.
  nn::Tensor batch_loss(const Batch& batch, bool train, std::uint64_t dropout_seed) const;
};

class TransformerCaptioner final : public CaptionModel {
 public:
  // `embeddings` may be null, in which case a zero matrix of the right shape is
  // created (load_parameters fills it afterwards).
  TransformerCaptioner(TransformerConfig config, std::size_t vocab_size, const EmbeddingMatrix* embeddings,
                       std::uint64_t seed);

  const TransformerConfig& config() const { return config_; }
  std::string kind() const override { return "transformer"; }
  std::size_t image_dim() const override { return config_.image_dim; }
  std::size_t vocab_size() const override { return vocab_size_; }
  nn::ParameterList parameters() const override;
  nn::Tensor sequence_logits(std::span<const float> image, std::span<const std::int32_t> tokens, bool train,
                             Rng& dropout_rng) const override;
  std::vector<double> next_token_logits(std::span<const float> image,
                                        std::span<const std::int32_t> prefix) const override;
  std::string config_json() const override;

  // (1 + regional + local) x model_dim hierarchical visual memory.
  nn::Tensor encode_visual(std::span<const float> image) const;
  // Decoder over an explicit memory; kVocab for out-of-range tokens.
  nn::Tensor decode(std::span<const std::int32_t> tokens, const nn::Tensor& memory, bool train, Rng& dropout_rng) const;

  struct Layer {
    nn::AttentionWeights self_attention;
    nn::LayerNorm self_norm;
    nn::AttentionWeights cross_attention;
    nn::LayerNorm cross_norm;
    nn::Dense ffn_in;
    nn::Dense ffn_out;
    nn::LayerNorm ffn_norm;
  };

  // Exposed for tests that set weights by hand.
  nn::Tensor embedding;
  nn::Dense global_proj;
  nn::Dense regional_proj;
  nn::Dense regional_expand;
  nn::Dense local_proj;
  nn::Dense local_expand;
  nn::LayerNorm visual_norm;
  std::vector<Layer> layers;
  nn::LayerNorm head_norm;
  nn::Dense head;

 private:
  TransformerConfig config_;
  std::size_t vocab_size_;
};

class LstmCaptioner final : public CaptionModel {
 public:
  LstmCaptioner(LstmConfig config, std::size_t vocab_size, const EmbeddingMatrix* embeddings, std::uint64_t seed);

  const LstmConfig& config() const { return config_; }
  std::string kind() const override { return "lstm"; }
  std::size_t image_dim() const override { return config_.image_dim; }
  std::size_t vocab_size() const override { return vocab_size_; }
  nn::ParameterList parameters() const override;
  nn::Tensor sequence_logits(std::span<const float> image, std::span<const std::int32_t> tokens, bool train,
                             Rng& dropout_rng) const override;
  std::vector<double> next_token_logits(std::span<const float> image,
                                        std::span<const std::int32_t> prefix) const override;
  std::string config_json() const override;

  // Single-step head: softmax distribution over the token after `prefix`.
  std::vector<double> predict(std::span<const float> image, std::span<const std::int32_t> prefix) const;

  nn::Tensor embedding;
  nn::Dense image_proj;
  nn::LstmWeights lstm;
  nn::Dense fusion;
  nn::Dense head;

 private:
  LstmConfig config_;
  std::size_t vocab_size_;
};

struct TrainPhase {
  double learning_rate = 1e-3;
  std::size_t epochs = 0;
};

struct TrainSchedule {
  TrainPhase phase1{1e-3, 20};
  TrainPhase phase2{1e-4, 10};
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;
  // Stop as soon as an epoch's mean loss falls below this (0 = never).
  double target_loss = 0.0;
  // Batches prepared ahead of the consumer (0 = build inline).
  std::size_t prefetch = 2;

  // kConfig when phase 2 runs with a learning rate not below phase 1's.
  void validate() const;
};

struct LossRecord {
  std::size_t epoch = 0;  // 1-based, counted across phases
  int phase = 1;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> curve;
  std::uint64_t steps = 0;
  bool stopped_early = false;
};

struct TrainingData {
  const std::vector<CaptionRecord>& records;
  const FeatureStore& features;
  const Vocabulary& vocab;
};

// Called after each phase with (phase, optimizer).
using PhaseCallback = std::function<void(int, const nn::Adam&)>;

// Epoch loss = summed token NLL / token count. kNumeric (naming the step and
// batch) if a batch loss is not finite.
TrainResult train(CaptionModel& model, const TrainSchedule& schedule, const TrainingData& data,
                  const PhaseCallback& on_phase_end = {});

// Greedy decoding from startseq. Pad and startseq are never emitted; ties go
// to the smallest index. At most max_len content tokens.
std::vector<std::string> generate_caption(const CaptionModel& model, std::span<const float> image,
                                          const Vocabulary& vocab, std::size_t max_len = kDefaultMaxSeqLen);

// model.vlcf + model.json in `dir`.
void save_model(const CaptionModel& model, const std::filesystem::path& dir, const std::string& extra_metadata = "{}");
std::unique_ptr<CaptionModel> load_model(const std::filesystem::path& dir);

std::string loss_curve_csv(const std::vector<LossRecord>& curve);

}  // namespace vlce
