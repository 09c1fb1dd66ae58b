#include "panning/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "panning/rng.hpp"
#include "panning/tape.hpp"

namespace panning::train {

void TrainConfig::validate() const {
  if (epochs < 0 || batch <= 0 || momentum < 0 || lr0 <= 0 || weight_decay < 0)
    throw std::invalid_argument("TrainConfig: bad field value");
}

double cosine_lr(int epoch, int total, double eta0) {
  if (epoch < 0 || epoch >= total)
    throw std::invalid_argument("cosine_lr: epoch out of [0,total)");
  const double lr =
      eta0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / total));
  return std::max(lr, 0.0);
}

namespace {

struct BatchEval {
  double loss = 0.0;
  int correct = 0;
};

BatchEval forward_batch(const model::NetworkSpec& spec,
                        const model::Parameters& params, const model::Mask& mask,
                        const ad::Tensor& images, const std::vector<int>& labels,
                        ad::GradientVector* gw, ad::GradientVector* gb) {
  ad::Tape tape;
  const model::ForwardResult fr =
      model::forward(tape, spec, params, &mask, images);
  const int loss_id = tape.softmax_cross_entropy(fr.logits, labels);
  BatchEval ev;
  ev.loss = tape.value(loss_id).data[0];

  const ad::Tensor& logits = tape.value(fr.logits);
  const int classes = logits.dim(1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.data.data() + i * static_cast<std::size_t>(classes);
    const int pred = static_cast<int>(
        std::max_element(row, row + classes) - row);
    if (pred == labels[i]) ++ev.correct;
  }

  if (gw) {
    tape.backward(loss_id);
    *gw = model::gather_weight_grads(tape, spec, fr);
    *gb = model::gather_bias_grads(tape, spec, fr);
  }
  return ev;
}

}  // namespace

TrainResult train_sparse(const model::NetworkSpec& spec,
                         const model::Parameters& init,
                         const model::Mask& mask,
                         const data::Dataset& train_set,
                         const data::Dataset* test_set,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (mask.keep.size() != init.weights.size())
    throw std::invalid_argument("train_sparse: mask/weights size mismatch");

  TrainResult out;
  out.params = init;
  // establish the support invariant up front
  for (std::size_t i = 0; i < mask.keep.size(); ++i)
    if (mask.keep[i] == 0.0) out.params.weights[i] = 0.0;

  const std::size_t n = train_set.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng = make_rng(cfg.seed, /*stream=*/0x5d9);

  std::vector<double> vel_w(out.params.weights.size(), 0.0);
  std::vector<double> vel_b(out.params.biases.size(), 0.0);
  ad::GradientVector gw, gb;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    long correct = 0;
    int step = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch));
      const std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(stop));
      const ad::Tensor images = data::gather_images(train_set, idx, cfg.conv_layout);
      const std::vector<int> labels = data::gather_labels(train_set, idx);
      const BatchEval ev =
          forward_batch(spec, out.params, mask, images, labels, &gw, &gb);
      ++step;
      if (!std::isfinite(ev.loss))
        throw std::runtime_error("train_sparse: non-finite loss at epoch " +
                                 std::to_string(epoch) + " step " +
                                 std::to_string(step));
      loss_sum += ev.loss * static_cast<double>(idx.size());
      correct += ev.correct;

      for (std::size_t i = 0; i < out.params.weights.size(); ++i) {
        if (mask.keep[i] == 0.0) continue;
        const double g = gw[i] + cfg.weight_decay * out.params.weights[i];
        vel_w[i] = cfg.momentum * vel_w[i] + g;
        out.params.weights[i] -= lr * vel_w[i];
      }
      for (std::size_t i = 0; i < out.params.biases.size(); ++i) {
        vel_b[i] = cfg.momentum * vel_b[i] + gb[i];
        out.params.biases[i] -= lr * vel_b[i];
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    if (test_set)
      rec.test_acc =
          evaluate(spec, out.params, mask, *test_set, cfg.conv_layout, cfg.batch);
    out.history.push_back(rec);
  }
  return out;
}

double evaluate(const model::NetworkSpec& spec, const model::Parameters& params,
                const model::Mask& mask, const data::Dataset& test_set,
                bool conv_layout, int batch) {
  const std::size_t n = test_set.size();
  if (n == 0) throw std::invalid_argument("evaluate: empty test set");
  long correct = 0;
  std::vector<int> idx;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch)) {
    const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch));
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), static_cast<int>(start));
    const ad::Tensor images = data::gather_images(test_set, idx, conv_layout);
    const std::vector<int> labels = data::gather_labels(test_set, idx);
    const BatchEval ev =
        forward_batch(spec, params, mask, images, labels, nullptr, nullptr);
    correct += ev.correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

void write_metrics_csv(const std::vector<EpochRecord>& history,
                       const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open metrics file " + path);
  f << "epoch,lr,loss,train_acc,test_acc\n";
  for (const EpochRecord& r : history)
    f << r.epoch << ',' << r.lr << ',' << r.loss << ',' << r.train_acc << ','
      << r.test_acc << '\n';
}

}  // namespace panning::train
