#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cogscreen/attention/kernels.h"
#include "cogscreen/preprocess.h"
#include "json.hpp"

namespace cogscreen::attn {

class TokenVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  TokenVocab();
  // Words seen at least min_freq times across docs, in lexicographic order
  // after the reserved ids.
  static TokenVocab build(std::span<const std::string> docs, int min_freq = 2);
  static TokenVocab from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  // Unknown words map to kUnk.
  int id(std::string_view word) const;
  std::vector<int> encode(std::string_view clean_text) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct WindowConfig {
  int window_len = 128;
  double overlap_fraction = 0.20;

  int stride() const;
  void validate() const;
};

struct WindowSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const WindowSpan&) const = default;
};

// Starts at 0, stride, 2*stride, ... until a window reaches the last token.
// Empty input yields no windows.
std::vector<WindowSpan> slice_windows(std::size_t n_tokens, const WindowConfig& config);

struct AttnConfig {
  int vocab_size = 3;
  int d_model = 64;
  int n_heads = 2;
  int n_layers = 2;
  int d_ff = 128;
  int local_radius = 16;
  double dropout = 0.0;

  int d_head() const { return d_model / n_heads; }
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 3e-4;
  double adam_eps = 1e-9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int epochs = 4;
  int batch_size = 16;
  // Global gradient-norm clip; <= 0 disables.
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  // Fine-tuning values used for the long-document checkpoint.
  static TrainConfig full_preset();
  void validate() const;
};

// Named parameter tensors stored in one flat buffer.
struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

class AttnModel {
 public:
  AttnModel() = default;
  // Random initialization, deterministic in seed.
  AttnModel(const AttnConfig& config, std::uint64_t seed);

  const AttnConfig& config() const { return config_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(std::string_view name) const;
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  Eigen::Map<const RowMatrix> view(const ParamBlock& b) const;
  Eigen::Map<RowMatrix> view(const ParamBlock& b, std::vector<double>& buffer) const;
  Eigen::Map<RowMatrix> mut(std::string_view name) { return view(block(name), params_); }

  static AttnModel from_parts(const AttnConfig& config, std::vector<ParamBlock> blocks,
                              std::vector<double> params);

 private:
  void layout();

  AttnConfig config_;
  std::vector<ParamBlock> blocks_;
  std::vector<double> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

// Sinusoidal encoding for positions [0, n).
RowMatrix positional_encoding(int n, int d_model);

enum class AttentionMode { kLocal, kLocalSerial, kFull };

struct ForwardOptions {
  AttentionMode mode = AttentionMode::kLocal;
  // Dropout masks are drawn only when training.
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

struct ForwardResult {
  double logit = 0.0;
  double probability = 0.5;
  // Token ids actually fed in, CLS first.
  std::vector<int> ids;
  AttentionPattern pattern;
  // probs[layer * n_heads + head] aligned with pattern.cols (empty in full mode).
  std::vector<std::vector<double>> probs;
};

// `window` holds token ids without CLS; CLS is prepended here. Ids outside
// the vocabulary are replaced with UNK.
ForwardResult forward_window(const AttnModel& model, std::span<const int> window,
                             const ForwardOptions& options = {});

// Binary cross-entropy loss of one window and its gradient, written into a
// full-size buffer (zeroed first).
double loss_and_gradient(const AttnModel& model, std::span<const int> window, int label,
                         std::vector<double>& grad, const ForwardOptions& options = {});

double window_loss(const AttnModel& model, std::span<const int> window, int label,
                   const ForwardOptions& options = {});

struct LabeledWindow {
  std::vector<int> tokens;
  int label = 0;
};

struct TrainLog {
  // Running mean of the batch losses seen during each epoch.
  std::vector<double> epoch_loss;
  int steps = 0;
};

// Adam on mean binary cross-entropy. Examples inside a batch run in
// parallel; gradients are summed in example order, so results do not depend
// on the thread count. Throws DataError if the loss becomes NaN.
TrainLog train(AttnModel& model, std::span<const LabeledWindow> data, const TrainConfig& config,
               const std::function<void(int epoch, double loss)>& on_epoch = {});

double mean_loss(const AttnModel& model, std::span<const LabeledWindow> data);

// A patient's note tokens laid end to end, with where each came from.
struct TokenizedDocument {
  std::vector<int> ids;
  std::vector<std::uint32_t> note_index;
  std::vector<TokenSpan> spans;
};

TokenizedDocument tokenize_notes(std::span<const CleanNote> notes, const TokenVocab& vocab);

struct WindowPrediction {
  WindowSpan span;
  double probability = 0.0;
};

struct PatientPrediction {
  int label = 0;
  double probability = 0.0;
  std::vector<WindowPrediction> windows;
};

// Mode of window labels (p >= 0.5); a tie goes to mean probability >= 0.5.
int aggregate_mode(std::span<const double> window_probabilities);

PatientPrediction predict_patient(const AttnModel& model, const TokenizedDocument& doc,
                                  const WindowConfig& windows);

struct Highlight {
  std::size_t position = 0;  // token index inside the window
  double weight = 0.0;
};

// Final-layer CLS attention averaged over heads, CLS itself excluded,
// strongest first. k larger than the window returns every token.
std::vector<Highlight> attention_highlights(const AttnModel& model, std::span<const int> window,
                                            std::size_t k);

struct ModelBundle {
  AttnModel model;
  TokenVocab vocab;
  WindowConfig windows;
  TrainConfig train;
  // Patient-level decision threshold on the mean window probability.
  double threshold = 0.5;
};

nlohmann::json to_json(const AttnConfig& c);
AttnConfig attn_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const WindowConfig& c);
WindowConfig window_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// `<path>` holds the CGS1 parameter container, `<path>.json` the sidecar.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);
std::string encode_parameters(const AttnModel& model);
AttnModel decode_parameters(std::string_view bytes, const AttnConfig& config);

}  // namespace cogscreen::attn
