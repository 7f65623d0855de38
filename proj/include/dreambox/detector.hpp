#pragma once

#include "dreambox/dataset.hpp"
#include "dreambox/energy.hpp"
#include "dreambox/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dreambox {

// Crop classifier geometry: 3x16x16 input, 3x3 valid conv with 8 maps,
// ReLU, 2x2 max-pool, a 32-unit ReLU layer (the penultimate feature), then
// a K-way class head and a scalar objectness head.
namespace crop_net {
inline constexpr int input = 16;
inline constexpr int channels = 3;
inline constexpr int kernel = 3;
inline constexpr int maps = 8;
inline constexpr int conv_out = input - kernel + 1; // 14
inline constexpr int pooled = conv_out / 2;          // 7
inline constexpr int flat = maps * pooled * pooled;  // 392
inline constexpr int hidden = 32;
inline constexpr int patch = channels * kernel * kernel; // 27
inline constexpr int input_size = channels * input * input;
} // namespace crop_net

template <typename Scalar>
struct DetectorParams
{
  Matrix<Scalar> conv_w; // maps x patch
  Vector<Scalar> conv_b;
  Matrix<Scalar> fc_w; // hidden x flat
  Vector<Scalar> fc_b;
  Matrix<Scalar> cls_w; // K x hidden
  Vector<Scalar> cls_b;
  Vector<Scalar> obj_w; // hidden
  Scalar obj_b = Scalar(0);

  Eigen::Index num_classes() const { return cls_w.rows(); }

  static DetectorParams zeros(int num_classes)
  {
    using namespace crop_net;
    DetectorParams p;
    p.conv_w = Matrix<Scalar>::Zero(maps, patch);
    p.conv_b = Vector<Scalar>::Zero(maps);
    p.fc_w = Matrix<Scalar>::Zero(hidden, flat);
    p.fc_b = Vector<Scalar>::Zero(hidden);
    p.cls_w = Matrix<Scalar>::Zero(num_classes, hidden);
    p.cls_b = Vector<Scalar>::Zero(num_classes);
    p.obj_w = Vector<Scalar>::Zero(hidden);
    return p;
  }

  /// He-normal weights, zero biases.
  static DetectorParams init(int num_classes, std::uint64_t seed)
  {
    using namespace crop_net;
    auto p = zeros(num_classes);
    std::mt19937_64 rng(seed);
    auto fill = [&](auto& m, double fan_in) {
      std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
      for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = Scalar(n(rng));
    };
    fill(p.conv_w, patch);
    fill(p.fc_w, flat);
    fill(p.cls_w, hidden);
    fill(p.obj_w, hidden);
    return p;
  }

  Scalar squared_norm() const
  {
    return conv_w.squaredNorm() + conv_b.squaredNorm() + fc_w.squaredNorm() + fc_b.squaredNorm() +
           cls_w.squaredNorm() + cls_b.squaredNorm() + obj_w.squaredNorm() + obj_b * obj_b;
  }

  void scale(Scalar factor)
  {
    conv_w *= factor;
    conv_b *= factor;
    fc_w *= factor;
    fc_b *= factor;
    cls_w *= factor;
    cls_b *= factor;
    obj_w *= factor;
    obj_b *= factor;
  }

  /// this += alpha * other, over every parameter.
  void axpy(Scalar alpha, const DetectorParams& other)
  {
    conv_w += alpha * other.conv_w;
    conv_b += alpha * other.conv_b;
    fc_w += alpha * other.fc_w;
    fc_b += alpha * other.fc_b;
    cls_w += alpha * other.cls_w;
    cls_b += alpha * other.cls_b;
    obj_w += alpha * other.obj_w;
    obj_b += alpha * other.obj_b;
  }
};

/// Forward-pass activations kept for the backward pass.
template <typename Scalar>
struct CropActivations
{
  Matrix<Scalar> cols;          // patch x conv_out^2
  Matrix<Scalar> conv;          // maps x conv_out^2, post-ReLU
  Vector<Scalar> pooled;        // flat
  std::vector<int> pool_argmax; // flat -> index into conv_out^2
  Vector<Scalar> feature;       // hidden, post-ReLU
  Vector<Scalar> logits;        // K
  Scalar objectness = Scalar(0);
};

/// Unrolls 3x3 patches of a CHW crop into columns.
template <typename Scalar>
Matrix<Scalar> im2col(const Vector<Scalar>& crop)
{
  using namespace crop_net;
  Matrix<Scalar> cols(patch, conv_out * conv_out);
  for (int oy = 0; oy < conv_out; ++oy)
    for (int ox = 0; ox < conv_out; ++ox) {
      int r = 0;
      for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx)
            cols(r++, oy * conv_out + ox) = crop[(c * input + oy + ky) * input + ox + kx];
    }
  return cols;
}

template <typename Scalar>
CropActivations<Scalar> forward(const DetectorParams<Scalar>& p, const Vector<Scalar>& crop)
{
  using namespace crop_net;
  CropActivations<Scalar> a;
  a.cols = im2col(crop);
  a.conv = ((p.conv_w * a.cols).colwise() + p.conv_b).cwiseMax(Scalar(0));
  a.pooled.resize(flat);
  a.pool_argmax.resize(flat);
  for (int m = 0; m < maps; ++m)
    for (int py = 0; py < pooled; ++py)
      for (int px = 0; px < pooled; ++px) {
        int best = (2 * py) * conv_out + 2 * px;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int idx = (2 * py + dy) * conv_out + 2 * px + dx;
            if (a.conv(m, idx) > a.conv(m, best))
              best = idx;
          }
        const int o = (m * pooled + py) * pooled + px;
        a.pooled[o] = a.conv(m, best);
        a.pool_argmax[o] = best;
      }
  a.feature = (p.fc_w * a.pooled + p.fc_b).cwiseMax(Scalar(0));
  a.logits = p.cls_w * a.feature + p.cls_b;
  a.objectness = p.obj_w.dot(a.feature) + p.obj_b;
  return a;
}

/// Accumulates into `grad` the parameter gradient for upstream derivatives
/// d_logits and d_objectness of one crop.
template <typename Scalar>
void backward(const DetectorParams<Scalar>& p, const CropActivations<Scalar>& a, const Vector<Scalar>& d_logits,
              Scalar d_objectness, DetectorParams<Scalar>& grad)
{
  using namespace crop_net;
  grad.cls_w.noalias() += d_logits * a.feature.transpose();
  grad.cls_b += d_logits;
  grad.obj_w += d_objectness * a.feature;
  grad.obj_b += d_objectness;

  Vector<Scalar> d_feature = p.cls_w.transpose() * d_logits + d_objectness * p.obj_w;
  d_feature = (a.feature.array() > Scalar(0)).select(d_feature, Scalar(0));
  grad.fc_w.noalias() += d_feature * a.pooled.transpose();
  grad.fc_b += d_feature;

  const Vector<Scalar> d_pooled = p.fc_w.transpose() * d_feature;
  Matrix<Scalar> d_conv = Matrix<Scalar>::Zero(maps, conv_out * conv_out);
  for (int m = 0; m < maps; ++m)
    for (int i = 0; i < pooled * pooled; ++i) {
      const int o = m * pooled * pooled + i;
      if (a.conv(m, a.pool_argmax[o]) > Scalar(0))
        d_conv(m, a.pool_argmax[o]) += d_pooled[o];
    }
  grad.conv_w.noalias() += d_conv * a.cols.transpose();
  grad.conv_b += d_conv.rowwise().sum();
}

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits)
{
  const Scalar m = logits.maxCoeff();
  Vector<Scalar> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

// ---------------------------------------------------------------------------
// Training

enum class LossVariant { bce, focal };

struct TrainConfig
{
  int epochs = 18;
  int batch_size = 16; ///< images per step
  double learning_rate = 0.02;
  double momentum = 0; ///< plain SGD by default
  double grad_clip_norm = 0; ///< global L2 clip over all parameters, 0 = off
  std::vector<int> lr_decay_epochs{12, 16};
  double lr_decay_factor = 0.1;
  double weight_decay = 1e-5;
  double ood_loss_weight = 10.0;
  LossVariant loss_variant = LossVariant::focal;
  double focal_gamma = 2.0;
  std::uint64_t seed = 0;

  void validate() const;

  /// Learning rate in effect during `epoch` (1-based).
  double learning_rate_at(int epoch) const;
};

enum class CropKind { in_dist, ood, background };

struct Crop
{
  Vector<double> pixels; ///< CHW, scaled to [-0.5, 0.5]
  CropKind kind = CropKind::in_dist;
  int class_index = -1; ///< valid for in_dist crops
};

/// Which loss terms a batch evaluation includes.
struct LossTerms
{
  bool classification = true;
  bool objectness = true;
  bool ood = true;
};

struct BatchLoss
{
  double classification = 0;
  double objectness = 0;
  double ood = 0;
  double total() const { return classification + objectness + ood; }
};

struct BatchGradient
{
  BatchLoss loss;
  DetectorParams<double> detector;
  OodHeadGradient<double> head;
};

/// Losses and gradients of one batch. Classification uses in-distribution
/// crops only; objectness treats in-distribution and OOD crops as objects
/// and background crops as non-objects; the OOD term contrasts the
/// energies of in-distribution and OOD crops.
BatchGradient batch_gradient(const DetectorParams<double>& params, const OodHead<double>& head,
                             std::span<const Crop> batch, const TrainConfig& config, LossTerms terms = {});

Vector<double> crop_pixels(const RgbImage& image, const BoundingBox& box);

struct EpochLog
{
  int epoch = 0;
  std::size_t step = 0; ///< global step count at the end of the epoch
  double lr = 0;
  double cls_loss = 0, objness_loss = 0, ood_loss = 0, total = 0;
};

struct TrainedModel
{
  std::vector<std::string> class_names;
  DetectorParams<double> detector;
  OodHead<double> head;
  TrainConfig config;
  std::vector<EpochLog> log;
};

/// Trains the crop detector and the OOD head on the combined dataset. With
/// `use_ood = false` only classification and objectness are trained and the
/// dataset needs no OOD annotations (the no-OOD baseline).
TrainedModel train_toy_detector(const DetectionDataset& combined, const TrainConfig& config, bool use_ood = true);

/// Crops for every annotation plus one background crop per image. Class
/// indices follow `class_names`.
std::vector<std::vector<Crop>> prepare_crops(const DetectionDataset& dataset,
                                             const std::vector<std::string>& class_names, std::uint64_t seed);

struct ObjectRepresentation
{
  Vector<double> feature;
  Vector<double> logits;
  std::int64_t image_id = 0;
  std::size_t box_index = 0;
  std::optional<bool> is_ood;
  int category_id = 0;
};

std::vector<ObjectRepresentation> extract_representations(const DetectorParams<double>& params,
                                                          const DetectionDataset& dataset);

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

} // namespace dreambox
