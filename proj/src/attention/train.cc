#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "cogscreen/attention/model.h"
#include "cogscreen/error.h"

namespace cogscreen::attn {

namespace {

void check_data(std::span<const LabeledWindow> data) {
  if (data.empty()) throw DataError("no training windows");
  bool pos = false, neg = false;
  for (const auto& w : data) {
    if (w.label != 0 && w.label != 1) throw DataError("window labels must be 0 or 1");
    if (w.tokens.empty()) throw DataError("empty training window");
    (w.label ? pos : neg) = true;
  }
  if (!pos || !neg) throw DataError("training windows contain a single class");
}

}  // namespace

double mean_loss(const AttnModel& model, std::span<const LabeledWindow> data) {
  if (data.empty()) return 0.0;
  std::vector<double> losses(data.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t i = 0; i < data.size(); ++i) losses[i] = window_loss(model, data[i].tokens, data[i].label);
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(data.size());
}

TrainLog train(AttnModel& model, std::span<const LabeledWindow> data, const TrainConfig& config,
               const std::function<void(int, double)>& on_epoch) {
  config.validate();
  check_data(data);
  const std::size_t n_params = model.params().size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0), total(n_params);
  std::vector<std::vector<double>> grads(batch);
  std::vector<double> losses(batch);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::uint64_t> seeds;

  TrainLog log;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      std::vector<std::uint64_t> drop_seeds(count);
      for (auto& s : drop_seeds) s = seeds(rng);
#pragma omp parallel for schedule(dynamic, 1)
      for (std::size_t b = 0; b < count; ++b) {
        const auto& ex = data[order[start + b]];
        ForwardOptions opt;
        opt.training = true;
        opt.dropout_seed = drop_seeds[b];
        losses[b] = loss_and_gradient(model, ex.tokens, ex.label, grads[b], opt);
      }
      std::fill(total.begin(), total.end(), 0.0);
      double batch_loss = 0;
      for (std::size_t b = 0; b < count; ++b) {
        batch_loss += losses[b];
        const auto& g = grads[b];
        for (std::size_t i = 0; i < n_params; ++i) total[i] += g[i];
      }
      batch_loss /= static_cast<double>(count);
      if (!std::isfinite(batch_loss)) {
        throw DataError("training diverged (loss is " + std::to_string(batch_loss) +
                        " at epoch " + std::to_string(epoch + 1) + "); lower the learning rate");
      }
      epoch_total += batch_loss * static_cast<double>(count);

      double norm2 = 0;
      const double inv = 1.0 / static_cast<double>(count);
      for (auto& g : total) {
        g *= inv;
        norm2 += g * g;
      }
      const double norm = std::sqrt(norm2);
      const double clip = config.clip_norm > 0 && norm > config.clip_norm ? config.clip_norm / norm : 1.0;

      ++log.steps;
      const double bc1 = 1.0 - std::pow(config.beta1, log.steps);
      const double bc2 = 1.0 - std::pow(config.beta2, log.steps);
      auto& p = model.params();
      for (std::size_t i = 0; i < n_params; ++i) {
        const double g = total[i] * clip;
        m[i] = config.beta1 * m[i] + (1 - config.beta1) * g;
        v[i] = config.beta2 * v[i] + (1 - config.beta2) * g * g;
        p[i] -= config.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.adam_eps);
      }
    }
    const double epoch_loss = epoch_total / static_cast<double>(data.size());
    log.epoch_loss.push_back(epoch_loss);
    spdlog::debug("attention epoch {}/{} loss {:.5f}", epoch + 1, config.epochs, epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, epoch_loss);
  }
  return log;
}

TokenizedDocument tokenize_notes(std::span<const CleanNote> notes, const TokenVocab& vocab) {
  TokenizedDocument doc;
  for (std::size_t n = 0; n < notes.size(); ++n) {
    for (const auto& t : notes[n].tokens()) {
      doc.ids.push_back(vocab.id(std::string_view(notes[n].text).substr(t.clean_begin, t.clean_end - t.clean_begin)));
      doc.note_index.push_back(static_cast<std::uint32_t>(n));
      doc.spans.push_back(t);
    }
  }
  return doc;
}

int aggregate_mode(std::span<const double> probs) {
  if (probs.empty()) throw DataError("no window predictions to aggregate");
  std::size_t positive = 0;
  for (double p : probs) positive += p >= 0.5 ? 1 : 0;
  const std::size_t negative = probs.size() - positive;
  if (positive != negative) return positive > negative ? 1 : 0;
  const double mean = std::accumulate(probs.begin(), probs.end(), 0.0) / static_cast<double>(probs.size());
  return mean >= 0.5 ? 1 : 0;
}

PatientPrediction predict_patient(const AttnModel& model, const TokenizedDocument& doc, const WindowConfig& windows) {
  if (doc.ids.empty()) throw DataError("patient has no tokens");
  PatientPrediction out;
  const auto spans = slice_windows(doc.ids.size(), windows);
  out.windows.resize(spans.size());
  for (std::size_t w = 0; w < spans.size(); ++w) {
    const std::span<const int> ids(doc.ids.data() + spans[w].begin, spans[w].size());
    out.windows[w] = {spans[w], forward_window(model, ids).probability};
  }
  std::vector<double> probs;
  for (const auto& w : out.windows) probs.push_back(w.probability);
  out.label = aggregate_mode(probs);
  out.probability = std::accumulate(probs.begin(), probs.end(), 0.0) / static_cast<double>(probs.size());
  return out;
}

std::vector<Highlight> attention_highlights(const AttnModel& model, std::span<const int> window, std::size_t k) {
  const auto r = forward_window(model, window);
  const auto& cfg = model.config();
  std::vector<double> weight(window.size(), 0.0);
  const int last = cfg.n_layers - 1;
  for (int h = 0; h < cfg.n_heads; ++h) {
    const auto& probs = r.probs[static_cast<std::size_t>(last * cfg.n_heads + h)];
    for (int e = r.pattern.row_ptr[0]; e < r.pattern.row_ptr[1]; ++e) {
      const int j = r.pattern.cols[static_cast<std::size_t>(e)];
      if (j > 0) weight[static_cast<std::size_t>(j - 1)] += probs[static_cast<std::size_t>(e)] / cfg.n_heads;
    }
  }
  std::vector<Highlight> out;
  for (std::size_t i = 0; i < weight.size(); ++i) out.push_back({i, weight[i]});
  std::stable_sort(out.begin(), out.end(), [](const Highlight& a, const Highlight& b) { return a.weight > b.weight; });
  if (out.size() > k) out.resize(k);
  return out;
}

}  // namespace cogscreen::attn
