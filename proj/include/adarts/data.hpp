#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "adarts/tensor.hpp"

namespace adarts {

/// Images (N,C,H,W), standardized per channel, with integer labels.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t n_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
};

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::array<double, 3> kCifarMean = {0.4914, 0.4822, 0.4465};
inline constexpr std::array<double, 3> kCifarStd = {0.2470, 0.2435, 0.2616};

/// Reads CIFAR-10 binary batches: each record is one label byte followed by
/// the R, G and B 32×32 planes. `limit` > 0 keeps only the first records.
Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& paths,
                            std::size_t limit = 0);

struct SyntheticSpec {
  std::size_t n = 2000;
  std::size_t image_size = 16;
  std::size_t n_classes = 4;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

/// Balanced classes, each a fixed grating (class-specific frequency and
/// orientation) plus a class-specific bright patch, with Gaussian pixel noise.
Dataset make_synthetic(const SyntheticSpec& spec);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

/// Seeded partition into (first `fraction` of a permutation, the rest).
std::pair<Dataset, Dataset> split(const Dataset& data, double fraction,
                                  std::uint64_t seed);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

/// Shuffled mini-batches for one epoch; the order depends only on
/// (seed, epoch). A trailing partial batch is dropped.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, std::size_t batchsize, std::uint64_t seed,
                std::size_t epoch);

  bool next(Batch& batch);
  std::size_t size() const { return order_.size() / batchsize_; }

 private:
  const Dataset* data_;
  std::size_t batchsize_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

BatchIterator batches(const Dataset& data, std::size_t batchsize, std::uint64_t seed,
                      std::size_t epoch);

/// In-order batches covering the whole set; a trailing batch of one sample is
/// merged into the previous one (batch statistics need two samples).
std::vector<Batch> sequential_batches(const Dataset& data, std::size_t batchsize);

}  // namespace adarts
