#include <bit>
#include <cstring>

#include "cogscreen/attention/model.h"
#include "cogscreen/error.h"
#include "cogscreen/io.h"

namespace cogscreen::attn {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'G', 'S', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t take(int width) {
    if (pos_ + static_cast<std::size_t>(width) > bytes_.size()) throw DataError("model container is truncated");
    std::uint64_t x = 0;
    for (int i = 0; i < width; ++i) {
      x |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    }
    return x;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  double f64() { return std::bit_cast<double>(take(8)); }
  std::string str(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("model container is truncated");
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
T field(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

std::string encode_parameters(const AttnModel& model) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(model.blocks().size()));
  for (const auto& b : model.blocks()) {
    put_u32(out, static_cast<std::uint32_t>(b.name.size()));
    out += b.name;
    put_u32(out, static_cast<std::uint32_t>(b.rows));
    put_u32(out, static_cast<std::uint32_t>(b.cols));
  }
  for (double x : model.params()) put_f64(out, x);
  return out;
}

AttnModel decode_parameters(std::string_view bytes, const AttnConfig& config) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("not a CGS1 model container");
  }
  Reader in(bytes.substr(4));
  if (const auto v = in.u32(); v != kVersion) {
    throw DataError("unsupported model container version " + std::to_string(v));
  }
  const auto n_blocks = in.u32();
  std::vector<ParamBlock> blocks(n_blocks);
  std::size_t total = 0;
  for (auto& b : blocks) {
    b.name = in.str(in.u32());
    b.rows = static_cast<int>(in.u32());
    b.cols = static_cast<int>(in.u32());
    b.offset = total;
    total += b.size();
  }
  std::vector<double> params(total);
  for (auto& x : params) x = in.f64();
  if (!in.done()) throw DataError("trailing bytes after model parameters");
  return AttnModel::from_parts(config, std::move(blocks), std::move(params));
}

json to_json(const AttnConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},           {"n_heads", c.n_heads},
          {"n_layers", c.n_layers},     {"d_ff", c.d_ff},                 {"local_radius", c.local_radius},
          {"dropout", c.dropout}};
}

AttnConfig attn_config_from_json(const json& j) {
  AttnConfig c;
  try {
    c.vocab_size = field(j, "vocab_size", c.vocab_size);
    c.d_model = field(j, "d_model", c.d_model);
    c.n_heads = field(j, "n_heads", c.n_heads);
    c.n_layers = field(j, "n_layers", c.n_layers);
    c.d_ff = field(j, "d_ff", c.d_ff);
    c.local_radius = field(j, "local_radius", c.local_radius);
    c.dropout = field(j, "dropout", c.dropout);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("attention config: ") + e.what());
  }
  return c;
}

json to_json(const WindowConfig& c) {
  return {{"window_len", c.window_len}, {"overlap_fraction", c.overlap_fraction}};
}

WindowConfig window_config_from_json(const json& j) {
  WindowConfig c;
  try {
    c.window_len = field(j, "window_len", c.window_len);
    c.overlap_fraction = field(j, "overlap_fraction", c.overlap_fraction);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("window config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"adam_eps", c.adam_eps},   {"beta1", c.beta1},
          {"beta2", c.beta2},                 {"epochs", c.epochs},       {"batch_size", c.batch_size},
          {"clip_norm", c.clip_norm},         {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c = j.value("preset", std::string()) == "full" ? TrainConfig::full_preset() : TrainConfig{};
  try {
    c.learning_rate = field(j, "learning_rate", c.learning_rate);
    c.adam_eps = field(j, "adam_eps", c.adam_eps);
    c.beta1 = field(j, "beta1", c.beta1);
    c.beta2 = field(j, "beta2", c.beta2);
    c.epochs = field(j, "epochs", c.epochs);
    c.batch_size = field(j, "batch_size", c.batch_size);
    c.clip_norm = field(j, "clip_norm", c.clip_norm);
    c.seed = field(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  const std::string bytes = encode_parameters(bundle.model);
  json side = {{"format", "CGS1"},
               {"attention", to_json(bundle.model.config())},
               {"windows", to_json(bundle.windows)},
               {"train", to_json(bundle.train)},
               {"threshold", bundle.threshold},
               {"vocab", bundle.vocab.tokens()},
               {"parameters_sha256", sha256_hex(bytes)}};
  atomic_write(path, bytes);
  atomic_write(path.string() + ".json", side.dump(2) + "\n");
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  json side;
  try {
    side = json::parse(read_file(path.string() + ".json"));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ".json", 0, "", e.what());
  }
  const std::string bytes = read_file(path);
  if (side.contains("parameters_sha256") && side["parameters_sha256"] != sha256_hex(bytes)) {
    throw DataError("model parameters do not match the sidecar checksum: " + path.string());
  }
  ModelBundle b;
  const auto cfg = attn_config_from_json(side.at("attention"));
  b.model = decode_parameters(bytes, cfg);
  b.vocab = TokenVocab::from_tokens(side.at("vocab").get<std::vector<std::string>>());
  if (b.vocab.size() != cfg.vocab_size) throw DataError("vocabulary size does not match the model");
  b.windows = window_config_from_json(side.at("windows"));
  b.train = train_config_from_json(side.at("train"));
  b.threshold = side.value("threshold", 0.5);
  return b;
}

}  // namespace cogscreen::attn
