#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>

#include "symphony/features.hpp"
#include "symphony/image.hpp"

namespace symphony {

// A screenshot plus its lazily computed, write-once feature cache. Copies
// share both the pixels and the cache.
class Observation {
 public:
  Observation() = default;
  explicit Observation(Image image, int step_index = 0)
      : image_(std::make_shared<const Image>(std::move(image))),
        cache_(std::make_shared<Cache>()),
        step_index_(step_index) {}

  const Image& image() const { return *image_; }
  bool valid() const { return image_ != nullptr; }
  int step_index() const { return step_index_; }
  void set_step_index(int i) { step_index_ = i; }
  ScreenGeometry geometry() const { return image_->geometry(); }

  std::uint64_t phash() const {
    std::call_once(cache_->phash_once, [&] { cache_->phash = perceptual_hash(*image_); });
    return cache_->phash;
  }

  // Cached for `kSsimDefaultMaxSide`; other resolutions are computed fresh.
  const SsimBuffer& ssim_buffer(int max_side = kSsimDefaultMaxSide) const {
    if (max_side != kSsimDefaultMaxSide) {
      thread_local SsimBuffer scratch;
      scratch = make_ssim_buffer(*image_, max_side);
      return scratch;
    }
    std::call_once(cache_->ssim_once, [&] { cache_->ssim = make_ssim_buffer(*image_, max_side); });
    return cache_->ssim;
  }

  const std::string& content_hash() const {
    std::call_once(cache_->hash_once, [&] { cache_->hash = symphony::content_hash(*image_); });
    return cache_->hash;
  }

  // Drops cached features (pixels are kept). Other copies keep the old cache.
  void clear_feature_cache() { cache_ = std::make_shared<Cache>(); }

 private:
  struct Cache {
    std::once_flag phash_once;
    std::uint64_t phash = 0;
    std::once_flag ssim_once;
    SsimBuffer ssim;
    std::once_flag hash_once;
    std::string hash;
  };

  std::shared_ptr<const Image> image_;
  std::shared_ptr<Cache> cache_;
  int step_index_ = 0;
};

}  // namespace symphony
