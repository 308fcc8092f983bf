#include "adarts/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <string>

#include "adarts/random.hpp"

namespace adarts {

namespace {

Batch gather(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t per = data.channels() * data.height() * data.width();
  auto src = data.images.values();
  std::vector<double> values(indices.size() * per);
  Batch batch;
  batch.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(src.data() + indices[i] * per, per, values.data() + i * per);
    batch.labels.push_back(data.labels[indices[i]]);
  }
  batch.images = Tensor::from({indices.size(), data.channels(), data.height(), data.width()},
                              std::move(values));
  return batch;
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

}  // namespace

Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& paths,
                            std::size_t limit) {
  std::vector<unsigned char> bytes;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cifar10: cannot open " + path.string());
    std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (file.size() % kCifarRecordBytes != 0) {
      throw Error("cifar10: " + path.string() + " has " + std::to_string(file.size()) +
                  " bytes, not a multiple of " + std::to_string(kCifarRecordBytes));
    }
    bytes.insert(bytes.end(), file.begin(), file.end());
  }
  std::size_t n = bytes.size() / kCifarRecordBytes;
  if (limit > 0) n = std::min(n, limit);
  if (n == 0) throw Error("cifar10: no records");

  constexpr std::size_t plane = kCifarSide * kCifarSide;
  Dataset data;
  data.n_classes = 10;
  data.labels.resize(n);
  std::vector<double> values(n * 3 * plane);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* record = bytes.data() + i * kCifarRecordBytes;
    if (record[0] > 9) {
      throw Error("cifar10: record " + std::to_string(i) + " has label " +
                  std::to_string(record[0]));
    }
    data.labels[i] = record[0];
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double pixel = record[1 + c * plane + p] / 255.0;
        values[(i * 3 + c) * plane + p] = (pixel - kCifarMean[c]) / kCifarStd[c];
      }
    }
  }
  data.images = Tensor::from({n, 3, kCifarSide, kCifarSide}, std::move(values));
  return data;
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 2) throw Error("synthetic: need at least 2 samples");
  if (spec.n_classes < 2) throw Error("synthetic: need at least 2 classes");
  if (spec.image_size < 4) throw Error("synthetic: image size must be >= 4");
  const std::size_t s = spec.image_size, plane = s * s, channels = 3;
  Rng rng(spec.seed);

  // Class templates in [0,1].
  std::vector<std::vector<double>> templates(spec.n_classes,
                                             std::vector<double>(channels * plane));
  const std::size_t patch = std::max<std::size_t>(2, s / 4);
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    const double freq = 1.0 + static_cast<double>(k / 2);
    const bool vertical = k % 2 == 1;
    const std::size_t slots = s / patch;
    const std::size_t py = (k / slots) % slots * patch, px = k % slots * patch;
    for (std::size_t c = 0; c < channels; ++c) {
      const double phase = static_cast<double>(c) * std::numbers::pi / 3.0;
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          const double coord = static_cast<double>(vertical ? x : y) / static_cast<double>(s);
          double v = 0.45 + 0.25 * std::sin(2.0 * std::numbers::pi * freq * coord + phase);
          if (y >= py && y < py + patch && x >= px && x < px + patch) v += 0.3;
          templates[k][c * plane + y * s + x] = v;
        }
      }
    }
  }

  Dataset data;
  data.n_classes = spec.n_classes;
  data.labels.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) data.labels[i] = static_cast<int>(i % spec.n_classes);
  std::shuffle(data.labels.begin(), data.labels.end(), rng.engine());

  std::vector<double> values(spec.n * channels * plane);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const auto& t = templates[static_cast<std::size_t>(data.labels[i])];
    for (std::size_t j = 0; j < channels * plane; ++j) {
      const double v = t[j] + rng.normal(0.0, spec.noise);
      values[i * channels * plane + j] = std::clamp(v, 0.0, 1.0);
    }
  }
  // Per-channel standardization with the set's own statistics.
  for (std::size_t c = 0; c < channels; ++c) {
    double mu = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < spec.n; ++i) {
      for (std::size_t p = 0; p < plane; ++p) mu += values[(i * channels + c) * plane + p];
    }
    mu /= static_cast<double>(spec.n * plane);
    for (std::size_t i = 0; i < spec.n; ++i) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = values[(i * channels + c) * plane + p] - mu;
        sq += d * d;
      }
    }
    const double sd = std::sqrt(sq / static_cast<double>(spec.n * plane));
    for (std::size_t i = 0; i < spec.n; ++i) {
      for (std::size_t p = 0; p < plane; ++p) {
        double& v = values[(i * channels + c) * plane + p];
        v = (v - mu) / sd;
      }
    }
  }
  data.images = Tensor::from({spec.n, channels, s, s}, std::move(values));
  return data;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error("subset: empty index set");
  Batch b = gather(data, indices);
  return Dataset{std::move(b.images), std::move(b.labels), data.n_classes};
}

std::pair<Dataset, Dataset> split(const Dataset& data, double fraction,
                                  std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error("split: fraction must lie in (0,1), got " + std::to_string(fraction));
  }
  const auto first = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size())));
  if (first == 0 || first == data.size()) throw Error("split: empty side");
  Rng rng(seed);
  std::vector<std::size_t> order = permutation(data.size(), rng);
  std::span<const std::size_t> all(order);
  return {subset(data, all.first(first)), subset(data, all.subspan(first))};
}

BatchIterator::BatchIterator(const Dataset& data, std::size_t batchsize,
                             std::uint64_t seed, std::size_t epoch)
    : data_(&data), batchsize_(batchsize) {
  if (batchsize == 0 || batchsize > data.size()) {
    throw Error("batches: batchsize " + std::to_string(batchsize) + " for " +
                std::to_string(data.size()) + " samples");
  }
  Rng rng(seed * 1000003ULL + epoch + 1);
  order_ = permutation(data.size(), rng);
}

bool BatchIterator::next(Batch& batch) {
  if (cursor_ + batchsize_ > order_.size()) return false;
  batch = gather(*data_, std::span<const std::size_t>(order_).subspan(cursor_, batchsize_));
  cursor_ += batchsize_;
  return true;
}

BatchIterator batches(const Dataset& data, std::size_t batchsize, std::uint64_t seed,
                      std::size_t epoch) {
  return BatchIterator(data, batchsize, seed, epoch);
}

std::vector<Batch> sequential_batches(const Dataset& data, std::size_t batchsize) {
  if (batchsize == 0) throw Error("sequential_batches: batchsize must be positive");
  std::vector<Batch> out;
  std::size_t start = 0;
  while (start < data.size()) {
    std::size_t end = std::min(data.size(), start + batchsize);
    if (data.size() - end == 1) ++end;
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    out.push_back(gather(data, idx));
    start = end;
  }
  return out;
}

}  // namespace adarts
