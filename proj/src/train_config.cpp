#include "snipsearch/train_config.hpp"

namespace snipsearch {

Json TrainConfig::to_json() const {
  Json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["max_source_len"] = max_source_len;
  j["max_target_len"] = max_target_len;
  j["seed"] = seed;
  j["shape"] = shape.to_json();
  j["min_frequency"] = min_frequency;
  j["max_vocab"] = max_vocab;
  j["dropout"] = dropout;
  j["warmup_steps"] = warmup_steps;
  j["clip_norm"] = clip_norm;
  j["freeze_encoder"] = freeze_encoder;
  j["max_input_len"] = max_input_len;
  return j;
}

TrainConfig TrainConfig::from_json(const Json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_source_len = j.value("max_source_len", c.max_source_len);
  c.max_target_len = j.value("max_target_len", c.max_target_len);
  c.seed = j.value("seed", c.seed);
  if (j.contains("shape")) c.shape = ModelShape::from_json(j.at("shape"));
  c.min_frequency = j.value("min_frequency", c.min_frequency);
  c.max_vocab = j.value("max_vocab", c.max_vocab);
  c.dropout = j.value("dropout", c.dropout);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.freeze_encoder = j.value("freeze_encoder", c.freeze_encoder);
  c.max_input_len = j.value("max_input_len", c.max_input_len);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0 || learning_rate <= 0.0 || max_source_len <= 0 ||
      max_target_len <= 0 || max_input_len <= 0) {
    throw ConfigError("training config values must be positive");
  }
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must be in [0, 1)");
  if (max_input_len > 512) throw ConfigError("max_input_len is capped at 512 tokens");
  shape.validate();
}

}  // namespace snipsearch
