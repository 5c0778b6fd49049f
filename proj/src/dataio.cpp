#include "puzzlegan/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "puzzlegan/image_io.hpp"
#include "puzzlegan/serialize.hpp"

namespace puzzlegan::dataio {

namespace {

void check_spec_size(int image_size) {
  if (image_size < 9)
    throw std::invalid_argument("dataset: image_size must be >= 9 to admit a 3x3 tiling");
}

class FolderDataset final : public Dataset {
 public:
  FolderDataset(const std::filesystem::path& root, int image_size, uint64_t shuffle_seed) {
    check_spec_size(image_size);
    image_size_ = image_size;
    if (!std::filesystem::is_directory(root))
      throw std::invalid_argument("image_folder dataset: no such directory: " + root.string());
    size_t skipped = 0;
    for (const auto& e : std::filesystem::directory_iterator(root)) {
      if (!e.is_regular_file()) continue;
      if (image_io::detect_format(e.path()) == image_io::ImageFormat::Unknown) {
        std::cerr << "warning: skipping non-PNG/JPEG file " << e.path() << "\n";
        ++skipped;
        continue;
      }
      files_.push_back(e.path());
    }
    std::sort(files_.begin(), files_.end());
    if (files_.empty())
      throw std::invalid_argument("image_folder dataset: no decodable images in " + root.string() +
                                  (skipped ? " (" + std::to_string(skipped) + " skipped)" : ""));
    root_ = root.string();
    shuffle_seed_ = shuffle_seed;
    init_iter(shuffle_seed);
  }

  int64_t size() const override { return int64_t(files_.size()); }

  Tensor sample(int64_t i) const override {
    image_io::ImageU8 img = image_io::decode_image(files_[size_t(i)]);
    // Resize the shorter side to S, then center-crop the square.
    const int s = image_size_;
    int rw, rh;
    if (img.width <= img.height) {
      rw = s;
      rh = std::max(s, int(std::lround(double(img.height) * s / img.width)));
    } else {
      rh = s;
      rw = std::max(s, int(std::lround(double(img.width) * s / img.height)));
    }
    img = image_io::resize_bilinear(img, rw, rh);
    const int ox = (rw - s) / 2, oy = (rh - s) / 2;
    image_io::ImageU8 crop;
    crop.width = s;
    crop.height = s;
    crop.rgb.resize(size_t(s) * size_t(s) * 3);
    for (int y = 0; y < s; ++y)
      std::copy_n(img.rgb.data() + ((size_t(y + oy) * size_t(rw)) + size_t(ox)) * 3, size_t(s) * 3,
                  crop.rgb.data() + size_t(y) * size_t(s) * 3);
    return image_io::to_tensor(crop);
  }

  std::string fingerprint() const override {
    return "image_folder;root=" + root_ + ";count=" + std::to_string(files_.size()) +
           ";size=" + std::to_string(image_size_) + ";shuffle_seed=" + std::to_string(shuffle_seed_) +
           ";preproc=resize_short_bilinear+center_crop+scale[-1,1]";
  }

 private:
  std::vector<std::filesystem::path> files_;
  std::string root_;
  uint64_t shuffle_seed_ = 0;
};

class SyntheticDataset final : public Dataset {
 public:
  SyntheticDataset(int64_t n, int size, uint64_t seed, uint64_t shuffle_seed)
      : n_(n), seed_(seed), shuffle_seed_(shuffle_seed) {
    check_spec_size(size);
    if (n < 1) throw std::invalid_argument("synthetic dataset: n must be >= 1");
    image_size_ = size;
    init_iter(shuffle_seed);
  }

  int64_t size() const override { return n_; }

  Tensor sample(int64_t i) const override {
    const int s = image_size_;
    Rng rng = Rng::seeded(Rng::mix(seed_, uint64_t(i) + 0x5EED));
    Tensor img({3, s, s});

    // Vertical two-tone gradient with jittered endpoint colors.
    double top[3], bot[3];
    for (int c = 0; c < 3; ++c) {
      top[c] = 0.55 + 0.3 * (rng.next_double() - 0.5);
      bot[c] = -0.55 + 0.3 * (rng.next_double() - 0.5);
    }
    // Horizontal tilt on the red channel gives every column a signature.
    const double tilt = 0.5 + 0.2 * (rng.next_double() - 0.5);

    // Centered disk with jittered pose, radius and color.
    const double cy = 0.5 * s + (rng.next_double() - 0.5) * s / 6.0;
    const double cx = 0.5 * s + (rng.next_double() - 0.5) * s / 6.0;
    const double radius = s * (0.18 + 0.08 * rng.next_double());
    double disk[3];
    for (int c = 0; c < 3; ++c) disk[c] = -0.9 + 1.8 * rng.next_double();

    for (int y = 0; y < s; ++y) {
      const double fy = double(y) / double(s - 1);
      for (int x = 0; x < s; ++x) {
        const double fx = double(x) / double(s - 1);
        const double r = std::hypot(y - cy, x - cx);
        // 1px smoothstep edge keeps values off a two-point lattice.
        const double edge = std::clamp(radius + 0.5 - r, 0.0, 1.0);
        for (int c = 0; c < 3; ++c) {
          double v = top[c] * (1.0 - fy) + bot[c] * fy;
          if (c == 0) v += tilt * (fx - 0.5);
          v = v * (1.0 - edge) + disk[c] * edge;
          img[int64_t((c * s + y) * s + x)] = float(std::clamp(v, -1.0, 1.0));
        }
      }
    }
    return img;
  }

  std::string fingerprint() const override {
    return "synthetic_structured;kind=disc-on-gradient;n=" + std::to_string(n_) +
           ";size=" + std::to_string(image_size_) + ";seed=" + std::to_string(seed_) +
           ";shuffle_seed=" + std::to_string(shuffle_seed_);
  }

 private:
  int64_t n_;
  uint64_t seed_, shuffle_seed_;
};

}  // namespace

void Dataset::init_iter(uint64_t shuffle_seed) {
  order_rng_ = Rng::seeded(Rng::mix(shuffle_seed, 0xDA7A));
  order_.clear();
  cursor_ = 0;
}

void Dataset::ensure_order() {
  if (!order_.empty()) return;
  order_.resize(size_t(size()));
  std::iota(order_.begin(), order_.end(), 0);
  for (int64_t i = size() - 1; i > 0; --i)
    std::swap(order_[size_t(i)], order_[size_t(order_rng_.uniform_int(i + 1))]);
}

Tensor Dataset::next_batch(int64_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("next_batch: batch_size must be >= 1");
  ensure_order();
  const int s = image_size_;
  Tensor batch({batch_size, 3, s, s});
  for (int64_t b = 0; b < batch_size; ++b) {
    const Tensor t = sample(order_[size_t(cursor_)]);
    std::copy_n(t.data(), t.numel(), batch.data() + b * t.numel());
    if (++cursor_ >= int64_t(order_.size())) {
      order_.clear();
      cursor_ = 0;
      ensure_order();  // reshuffle for the next epoch
    }
  }
  return batch;
}

void Dataset::save_iter_state(serialize::Writer& w) const {
  w.rng_state(order_rng_.state());
  w.i64v(order_);
  w.i64(cursor_);
}

void Dataset::load_iter_state(serialize::Reader& r) {
  order_rng_.set_state(r.rng_state());
  order_ = r.i64v();
  cursor_ = r.i64();
  if (!order_.empty() && (cursor_ < 0 || cursor_ >= int64_t(order_.size())))
    throw std::runtime_error("dataset iterator state: cursor out of range");
  for (int64_t i : order_)
    if (i < 0 || i >= size()) throw std::runtime_error("dataset iterator state: index out of range");
}

std::unique_ptr<Dataset> open_dataset(const DatasetSpec& spec) {
  switch (spec.source) {
    case Source::ImageFolder:
      if (spec.root.empty())
        throw std::invalid_argument("image_folder dataset: root path is required");
      return std::make_unique<FolderDataset>(spec.root, spec.image_size, spec.shuffle_seed);
    case Source::SyntheticStructured: {
      if (spec.synthetic.structure != "disc-on-gradient")
        throw std::invalid_argument("synthetic dataset: unknown structure kind '" +
                                    spec.synthetic.structure + "'");
      auto ds = std::make_unique<SyntheticDataset>(spec.synthetic.n_samples, spec.image_size,
                                                   spec.synthetic.seed, spec.shuffle_seed);
      return ds;
    }
  }
  throw std::logic_error("open_dataset: bad source");
}

std::unique_ptr<Dataset> synthetic_structured(int64_t n, int size, uint64_t seed) {
  return std::make_unique<SyntheticDataset>(n, size, seed, seed);
}

}  // namespace puzzlegan::dataio
