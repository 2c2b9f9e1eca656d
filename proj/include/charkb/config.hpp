#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "charkb/charcodec.hpp"
#include "charkb/errors.hpp"

namespace charkb {

inline constexpr const char* kBuildVersion = "charkb-0.1.0";

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Model + training hyperparameters. Defaults follow the reference setup:
/// question-encoder LSTM 2x200, decoder 100, CNN 200/100 with receptive
/// field 4, lambda=5, m=100, RMSProp lr 1e-4.
struct TrainConfig {
  int lstm_size = 200;
  int decoder_size = 100;
  int cnn_hidden = 200;
  int cnn_out = 100;
  int receptive_field = 4;
  int attention_m = 100;
  double lambda = 5.0;
  double learning_rate = 1e-4;
  double rmsprop_decay = 0.9;
  double rmsprop_epsilon = 1e-8;
  double grad_clip_norm = 0.0;  // 0 disables global-norm clipping
  int negatives_per_example = 50;
  int batch_size = 32;
  int epochs = 30;
  int lstm_layers = 2;
  int cnn_layers = 2;
  uint64_t seed = 1;
  EmbeddingMode embedding_mode = EmbeddingMode::Char;
  bool gated_feedback = true;
  bool word_boundary_matching = false;
  std::string negative_pool = "kb";  // kb | candidates
  int n_noise = 200;

  void validate() const {
    if (decoder_size != cnn_out) {
      throw ConfigError("decoder_size must equal cnn_out (cosine scoring requires it)");
    }
    if (lstm_size < 1 || cnn_hidden < 1 || cnn_out < 1 || attention_m < 1) {
      throw ConfigError("layer sizes must be positive");
    }
    if (receptive_field < 1) throw ConfigError("receptive_field must be positive");
    if (lstm_layers < 1 || lstm_layers > 2 || cnn_layers < 1 || cnn_layers > 2) {
      throw ConfigError("lstm_layers and cnn_layers must be 1 or 2");
    }
    if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
    if (rmsprop_decay <= 0 || rmsprop_decay >= 1) {
      throw ConfigError("rmsprop_decay must lie in (0,1)");
    }
    if (lambda <= 0) throw ConfigError("lambda must be positive");
    if (negative_pool != "kb" && negative_pool != "candidates") {
      throw ConfigError("negative_pool must be 'kb' or 'candidates'");
    }
    if (batch_size < 1 || epochs < 0 || negatives_per_example < 0 || n_noise < 0) {
      throw ConfigError("counts must be nonnegative (batch_size >= 1)");
    }
  }

  /// Fingerprint over everything that determines parameter shapes; stored in
  /// checkpoints and re-checked at load time.
  uint64_t architecture_fingerprint(int32_t vocab_size) const {
    std::ostringstream os;
    os << "lstm_size=" << lstm_size << ";decoder_size=" << decoder_size
       << ";cnn_hidden=" << cnn_hidden << ";cnn_out=" << cnn_out
       << ";receptive_field=" << receptive_field << ";attention_m=" << attention_m
       << ";lstm_layers=" << lstm_layers << ";cnn_layers=" << cnn_layers
       << ";gated_feedback=" << (gated_feedback ? 1 : 0)
       << ";embedding_mode=" << mode_name(embedding_mode)
       << ";vocab_size=" << vocab_size;
    return fnv1a64(os.str());
  }
};

/// A run-level config: training hyperparameters plus file locations. Flat
/// key=value text format; command-line flags mirror the keys 1:1 and
/// override file values.
struct RunConfig : TrainConfig {
  std::string kb_triples;
  std::string kb_aliases;
  std::string train_tsv;
  std::string valid_tsv;
  std::string test_tsv;
  std::string checkpoint_dir = "run";

  void set(const std::string& key, const std::string& value) {
    auto to_int = [&] {
      try { return std::stoi(value); }
      catch (...) { throw ConfigError("bad integer for " + key + ": " + value); }
    };
    auto to_double = [&] {
      try { return std::stod(value); }
      catch (...) { throw ConfigError("bad number for " + key + ": " + value); }
    };
    auto to_bool = [&]() -> bool {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ConfigError("bad boolean for " + key + ": " + value);
    };
    if (key == "lstm_size") lstm_size = to_int();
    else if (key == "decoder_size") decoder_size = to_int();
    else if (key == "cnn_hidden") cnn_hidden = to_int();
    else if (key == "cnn_out") cnn_out = to_int();
    else if (key == "receptive_field") receptive_field = to_int();
    else if (key == "attention_m") attention_m = to_int();
    else if (key == "lambda") lambda = to_double();
    else if (key == "learning_rate") learning_rate = to_double();
    else if (key == "rmsprop_decay") rmsprop_decay = to_double();
    else if (key == "rmsprop_epsilon") rmsprop_epsilon = to_double();
    else if (key == "grad_clip_norm") grad_clip_norm = to_double();
    else if (key == "negatives_per_example") negatives_per_example = to_int();
    else if (key == "batch_size") batch_size = to_int();
    else if (key == "epochs") epochs = to_int();
    else if (key == "lstm_layers") lstm_layers = to_int();
    else if (key == "cnn_layers") cnn_layers = to_int();
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "embedding_mode") {
      if (value == "char") embedding_mode = EmbeddingMode::Char;
      else if (value == "word") embedding_mode = EmbeddingMode::Word;
      else throw ConfigError("embedding_mode must be 'char' or 'word'");
    }
    else if (key == "gated_feedback") gated_feedback = to_bool();
    else if (key == "word_boundary_matching") word_boundary_matching = to_bool();
    else if (key == "negative_pool") negative_pool = value;
    else if (key == "n_noise") n_noise = to_int();
    else if (key == "kb_triples") kb_triples = value;
    else if (key == "kb_aliases") kb_aliases = value;
    else if (key == "train_tsv") train_tsv = value;
    else if (key == "valid_tsv") valid_tsv = value;
    else if (key == "test_tsv") test_tsv = value;
    else if (key == "checkpoint_dir") checkpoint_dir = value;
    else throw ConfigError("unknown config key: " + key);
  }

  std::vector<std::pair<std::string, std::string>> to_kv() const {
    std::vector<std::pair<std::string, std::string>> kv;
    auto num = [](double d) {
      std::ostringstream os;
      os << d;
      return os.str();
    };
    kv.emplace_back("lstm_size", std::to_string(lstm_size));
    kv.emplace_back("decoder_size", std::to_string(decoder_size));
    kv.emplace_back("cnn_hidden", std::to_string(cnn_hidden));
    kv.emplace_back("cnn_out", std::to_string(cnn_out));
    kv.emplace_back("receptive_field", std::to_string(receptive_field));
    kv.emplace_back("attention_m", std::to_string(attention_m));
    kv.emplace_back("lambda", num(lambda));
    kv.emplace_back("learning_rate", num(learning_rate));
    kv.emplace_back("rmsprop_decay", num(rmsprop_decay));
    kv.emplace_back("rmsprop_epsilon", num(rmsprop_epsilon));
    kv.emplace_back("grad_clip_norm", num(grad_clip_norm));
    kv.emplace_back("negatives_per_example", std::to_string(negatives_per_example));
    kv.emplace_back("batch_size", std::to_string(batch_size));
    kv.emplace_back("epochs", std::to_string(epochs));
    kv.emplace_back("lstm_layers", std::to_string(lstm_layers));
    kv.emplace_back("cnn_layers", std::to_string(cnn_layers));
    kv.emplace_back("seed", std::to_string(seed));
    kv.emplace_back("embedding_mode", mode_name(embedding_mode));
    kv.emplace_back("gated_feedback", gated_feedback ? "true" : "false");
    kv.emplace_back("word_boundary_matching", word_boundary_matching ? "true" : "false");
    kv.emplace_back("negative_pool", negative_pool);
    kv.emplace_back("n_noise", std::to_string(n_noise));
    kv.emplace_back("kb_triples", kb_triples);
    kv.emplace_back("kb_aliases", kb_aliases);
    kv.emplace_back("train_tsv", train_tsv);
    kv.emplace_back("valid_tsv", valid_tsv);
    kv.emplace_back("test_tsv", test_tsv);
    kv.emplace_back("checkpoint_dir", checkpoint_dir);
    return kv;
  }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : to_kv()) os << k << "=" << v << "\n";
    return os.str();
  }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::string line;
    long lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
      }
      set(line.substr(0, eq), line.substr(eq + 1));
    }
  }
};

}  // namespace charkb
