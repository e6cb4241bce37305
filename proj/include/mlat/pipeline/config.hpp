#pragma once

// Run configuration: one JSON tree covering corpus, model and per-stage training settings.
// Every field has a default, unknown keys are rejected, and the FNV-1a hash of the canonical
// dump identifies the run in every output.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "mlat/lra/lra.hpp"
#include "mlat/synth/corpus.hpp"
#include "mlat/vae/cma_vae.hpp"

namespace mlat::pipeline {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct TrainSettings {
  std::size_t steps = 0;
  double lr = 1e-3;
  std::size_t warmup = 100;
  std::size_t batch = 8;
  double clip = 1.0;   // global gradient-norm cap; 0 disables
  bool cosine = true;  // cosine decay to zero over the step budget
};

struct SampleSettings {
  std::size_t per_class = 20;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 7;
  std::string out_dir = "run";
  std::string corpus_dir;  // empty: <out_dir>/corpus
  std::vector<std::string> classes{"walk", "wave", "squat"};
  std::size_t per_class = 100;
  std::size_t frames = 32;
  double holdout = 0.1;     // trailing fraction of each class kept out of training
  double std_floor = 1e-2;  // standardization floor
  double paired_fraction = 0.5;  // share of training motions that carry a rendered image
  bool train_base = false;       // also train the backbone base projections in lra and flow
  vae::VaeConfig vae{};
  TrainSettings vae_train{2000, 1e-3, 100, 8, 1.0, true};
  lra::GeneratorConfig generator{};
  TrainSettings lra_train{1500, 1e-3, 100, 8, 1.0, true};
  TrainSettings flow_train{1500, 1e-3, 100, 8, 1.0, true};
  SampleSettings sample{};

  RunConfig() { vae.lambda_joint = 1.0; }

  std::string corpus_path() const { return corpus_dir.empty() ? out_dir + "/corpus" : corpus_dir; }
};

// A single field walker drives both directions, so reader and writer never drift apart.

class JsonReader {
 public:
  JsonReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  template <class T>
  void operator()(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("expected a boolean");
        field = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) {
          throw ConfigError("expected a non-negative integer");
        }
        field = v.get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("expected a number");
        field = v.get<T>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("expected a string");
        field = v.get<std::string>();
      } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
        if (!v.is_array()) throw ConfigError("expected an array of strings");
        field.clear();
        for (const auto& e : v) {
          if (!e.is_string()) throw ConfigError("expected an array of strings");
          field.push_back(e.get<std::string>());
        }
      } else {
        JsonReader sub(v, path_ + "." + key);
        walk(sub, field);
        sub.finish();
      }
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind("config:", 0) == 0) throw;
      throw ConfigError("config: '" + path_ + "." + key + "': " + msg);
    } catch (const json::exception& e) {
      throw ConfigError("config: '" + path_ + "." + key + "': " + e.what());
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + path_ + "." + k + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class JsonWriter {
 public:
  template <class T>
  void operator()(const char* key, const T& field) {
    if constexpr (std::is_arithmetic_v<T> || std::is_same_v<T, std::string> || std::is_same_v<T, std::vector<std::string>>) {
      j_[key] = field;
    } else {
      JsonWriter sub;
      walk(sub, const_cast<T&>(field));
      j_[key] = sub.j_;
    }
  }
  json j_ = json::object();
};

template <class V> void walk(V& v, nn::BlockConfig& c) {
  v("heads", c.heads);
  v("mlp_ratio", c.mlp_ratio);
}

template <class V> void walk(V& v, synth::ImageSettings& c) {
  v("channels", c.channels);
  v("height", c.height);
  v("width", c.width);
  v("sigma", c.sigma);
}

template <class V> void walk(V& v, vae::VaeConfig& c) {
  v("latent_tokens", c.latent_tokens);
  v("latent_dim", c.latent_dim);
  v("width", c.width);
  v("encoder_layers", c.encoder_layers);
  v("decoder_layers", c.decoder_layers);
  v("block", c.block);
  v("vision_dim", c.vision_dim);
  v("image", c.image);
  v("max_frames", c.max_frames);
  v("lambda_kl", c.lambda_kl);
  v("lambda_align", c.lambda_align);
  v("align_warmup", c.align_warmup);
  v("lambda_joint", c.lambda_joint);
  v("joint_warmup", c.joint_warmup);
}

template <class V> void walk(V& v, backbone::EmbedderConfig& c) {
  v("semantic_width", c.semantic_width);
  v("semantic_layers", c.semantic_layers);
  v("hidden", c.hidden);
  v("max_tokens", c.max_tokens);
  v("block", c.block);
  v("gen_single_linear", c.gen_single_linear);
}

template <class V> void walk(V& v, backbone::BackboneConfig& c) {
  v("blocks", c.blocks);
  v("block", c.block);
  v("lora_rank", c.lora_rank);
}

template <class V> void walk(V& v, flow::FlowHeadConfig& c) {
  v("blocks", c.blocks);
  v("width", c.width);
  v("heads", c.heads);
  v("mlp_ratio", c.mlp_ratio);
  v("time_dim", c.time_dim);
  v("max_tokens", c.max_tokens);
}

template <class V> void walk(V& v, flow::FlowConfig& c) {
  v("steps", c.steps);
  v("guidance", c.guidance);
  v("shift", c.shift);
  v("cond_dropout", c.cond_dropout);
  v("lambda_flow", c.lambda_flow);
  v("lambda_ntp", c.lambda_ntp);
  v("logit_mu", c.logit_mu);
  v("logit_sigma", c.logit_sigma);
  v("shift_train", c.shift_train);
  v("shift_sample", c.shift_sample);
}

template <class V> void walk(V& v, lra::BottleneckConfig& c) {
  v("keep_lo", c.keep_lo);
  v("keep_hi", c.keep_hi);
  v("dropout", c.dropout);
  v("sigma", c.sigma);
}

template <class V> void walk(V& v, lra::GeneratorConfig& c) {
  v("embed", c.embed);
  v("backbone", c.backbone);
  v("head", c.head);
  v("flow", c.flow);
  v("bottleneck", c.bottleneck);
}

template <class V> void walk(V& v, TrainSettings& c) {
  v("steps", c.steps);
  v("lr", c.lr);
  v("warmup", c.warmup);
  v("batch", c.batch);
  v("clip", c.clip);
  v("cosine", c.cosine);
}

template <class V> void walk(V& v, SampleSettings& c) { v("per_class", c.per_class); }

template <class V> void walk(V& v, RunConfig& c) {
  v("schema_version", c.schema_version);
  v("seed", c.seed);
  v("out_dir", c.out_dir);
  v("corpus_dir", c.corpus_dir);
  v("classes", c.classes);
  v("per_class", c.per_class);
  v("frames", c.frames);
  v("holdout", c.holdout);
  v("std_floor", c.std_floor);
  v("paired_fraction", c.paired_fraction);
  v("train_base", c.train_base);
  v("vae", c.vae);
  v("vae_train", c.vae_train);
  v("generator", c.generator);
  v("lra_train", c.lra_train);
  v("flow_train", c.flow_train);
  v("sample", c.sample);
}

inline void validate(const RunConfig& c) {
  if (c.schema_version != kSchemaVersion) {
    throw ConfigError("config: schema_version " + std::to_string(c.schema_version) + " is not supported (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  if (c.classes.empty()) throw ConfigError("config: 'classes' must not be empty");
  for (const auto& name : c.classes) {
    try {
      synth::parse_tag(name);
    } catch (const Error&) {
      throw ConfigError("config: unknown motion class '" + name + "'");
    }
  }
  if (c.sample.per_class < 2) throw ConfigError("config: 'sample.per_class' must be at least 2");
  if (c.per_class < 2) throw ConfigError("config: 'per_class' must be at least 2");
  if (!(c.holdout > 0.0 && c.holdout < 1.0)) throw ConfigError("config: 'holdout' must lie in (0,1)");
  if (c.frames < 8) throw ConfigError("config: 'frames' must be at least 8");
  if (!(c.std_floor > 0.0)) throw ConfigError("config: 'std_floor' must be positive");
  if (!(c.paired_fraction >= 0.0 && c.paired_fraction <= 1.0)) throw ConfigError("config: 'paired_fraction' must lie in [0,1]");
  for (const TrainSettings* t : {&c.vae_train, &c.lra_train, &c.flow_train}) {
    if (t->batch == 0) throw ConfigError("config: training batch must be positive");
    if (!(t->lr > 0.0)) throw ConfigError("config: learning rate must be positive");
    if (!(t->clip >= 0.0)) throw ConfigError("config: clip must be >= 0");
  }
  try {
    vae::VaeConfig v = c.vae;
    v.frames = c.frames;
    v.validate();
    c.generator.flow.validate();
    c.generator.bottleneck.validate();
    c.generator.embed.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline json to_json(const RunConfig& c) {
  JsonWriter w;
  walk(w, const_cast<RunConfig&>(c));
  return w.j_;
}

inline RunConfig from_json(const json& j) {
  RunConfig c;
  JsonReader r(j, "$");
  walk(r, c);
  r.finish();
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hex FNV-1a of the canonical (sorted-key) dump. Output locations do not take part, so the
/// same experiment run into two directories carries one hash.
inline std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("out_dir");
  j.erase("corpus_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

inline vae::VaeConfig vae_config(const RunConfig& c) {
  vae::VaeConfig v = c.vae;
  v.frames = c.frames;
  return v;
}

inline synth::CorpusSpec corpus_spec(const RunConfig& c) {
  synth::CorpusSpec s;
  s.classes.clear();
  for (const auto& n : c.classes) s.classes.push_back(synth::parse_tag(n));
  s.per_class = c.per_class;
  s.frames = c.frames;
  s.seed = c.seed;
  return s;
}

}  // namespace mlat::pipeline
