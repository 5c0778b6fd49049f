#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "puzzlegan/rng.hpp"
#include "puzzlegan/tensor.hpp"

namespace puzzlegan {
namespace serialize {
class Writer;
class Reader;
}  // namespace serialize

namespace dataio {

enum class Source { ImageFolder, SyntheticStructured };

struct SyntheticParams {
  int64_t n_samples = 0;
  std::string structure = "disc-on-gradient";
  uint64_t seed = 0;
};

struct DatasetSpec {
  Source source = Source::SyntheticStructured;
  std::string root;          // image_folder only
  int image_size = 48;       // >= 9 so a 3x3 tiling survives the crop
  uint64_t shuffle_seed = 0; // epoch iteration order
  SyntheticParams synthetic;
};

// Random-access samples plus a deterministic cyclic batch iterator: each epoch
// visits every sample once in an order drawn from shuffle_seed, reshuffling at
// epoch end (a batch may straddle the boundary; batches are always full).
// Iterator state round-trips through checkpoints via save/load_iter_state.
class Dataset {
 public:
  virtual ~Dataset() = default;

  virtual int64_t size() const = 0;
  virtual Tensor sample(int64_t i) const = 0;  // 3xSxS in [-1,1]
  virtual std::string fingerprint() const = 0;

  int image_size() const { return image_size_; }

  Tensor next_batch(int64_t batch_size);

  void save_iter_state(serialize::Writer& w) const;
  void load_iter_state(serialize::Reader& r);

 protected:
  void init_iter(uint64_t shuffle_seed);
  int image_size_ = 0;

 private:
  void ensure_order();
  Rng order_rng_;
  std::vector<int64_t> order_;
  int64_t cursor_ = 0;
};

std::unique_ptr<Dataset> open_dataset(const DatasetSpec& spec);

// Procedurally rendered images with fixed global structure (vertical two-tone
// gradient, a horizontal color tilt, and a centered soft disk with jittered
// pose/colors) so tile positions are statistically recoverable.
std::unique_ptr<Dataset> synthetic_structured(int64_t n, int size, uint64_t seed);

}  // namespace dataio
}  // namespace puzzlegan
