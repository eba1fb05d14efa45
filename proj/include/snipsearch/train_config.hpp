#pragma once

#include <cstdint>
#include <vector>

#include "snipsearch/jsonl.hpp"
#include "snipsearch/transformer.hpp"

namespace snipsearch {

/// Hyper-parameters shared by the rewriter and selector trainers.
struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  int max_source_len = 32;
  int max_target_len = 32;
  std::uint64_t seed = 13;

  ModelShape shape;
  std::size_t min_frequency = 2;
  std::size_t max_vocab = 50000;
  float dropout = 0.0f;
  int warmup_steps = 0;
  double clip_norm = 1.0;

  // Selector only.
  bool freeze_encoder = false;
  int max_input_len = 512;

  Json to_json() const;
  static TrainConfig from_json(const Json& j);
  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;             // teacher-forced token accuracy or pairwise accuracy
  double validation_accuracy = -1.0;  // selector only; -1 when no validation set
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

}  // namespace snipsearch
