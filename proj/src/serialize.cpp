#include "puzzlegan/serialize.hpp"

#include <functional>

namespace puzzlegan::serialize {

void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& fill) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("atomic_write: cannot open " + tmp.string());
    fill(os);
    if (!os) throw std::runtime_error("atomic_write: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace puzzlegan::serialize
