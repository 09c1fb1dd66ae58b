#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "panning/data.hpp"
#include "panning/model.hpp"

namespace panning::train {

struct TrainConfig {
  int epochs = 80;
  int batch = 256;
  double momentum = 0.9;
  double lr0 = 0.1;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  bool conv_layout = true;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainResult {
  model::Parameters params;
  std::vector<EpochRecord> history;
};

// eta0 * (1 + cos(pi * epoch / total)) / 2
double cosine_lr(int epoch, int total, double eta0);

// SGD with momentum on the masked support: gradients multiplied by the
// mask, weight decay on unmasked weights only, biases undecayed. Masked
// weights stay exactly zero. Throws std::runtime_error naming
// epoch/step when the loss turns non-finite.
TrainResult train_sparse(const model::NetworkSpec& spec,
                         const model::Parameters& init,
                         const model::Mask& mask,
                         const data::Dataset& train_set,
                         const data::Dataset* test_set,  // optional, for history
                         const TrainConfig& cfg);

double evaluate(const model::NetworkSpec& spec, const model::Parameters& params,
                const model::Mask& mask, const data::Dataset& test_set,
                bool conv_layout, int batch = 256);

void write_metrics_csv(const std::vector<EpochRecord>& history,
                       const std::string& path);

}  // namespace panning::train
