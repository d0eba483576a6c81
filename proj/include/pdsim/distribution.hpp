/* Copyright 2026 The pdsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace pdsim {

struct Bucket {
  double lower = 0.0;
  double upper = 0.0;
  double probability = 0.0;
};

// Equal-width partition of [min, max] into `count` buckets. A zero-width
// range collapses to a single point-mass bucket.
struct BucketGrid {
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 1;

  bool degenerate() const { return max <= min; }
  double width() const {
    return degenerate() ? 0.0 : (max - min) / static_cast<double>(count);
  }
  // Values outside the range are clamped to the first/last bucket; a value
  // equal to max falls in the last bucket.
  std::size_t index(double value) const;
  // Bucket boundaries in ascending order (count + 1 values, or one value for
  // a degenerate grid).
  std::vector<double> boundaries() const;
};

// FIFO-capped list of observed values with a lazily cached bucketed view.
class EmpiricalDistribution {
 public:
  static constexpr std::size_t kDefaultCapacity = 1000;
  static constexpr std::size_t kDefaultBucketCount = 10;

  explicit EmpiricalDistribution(std::size_t capacity = kDefaultCapacity,
                                 std::size_t bucket_count = kDefaultBucketCount);
  EmpiricalDistribution(std::span<const double> samples, std::size_t capacity,
                        std::size_t bucket_count);

  EmpiricalDistribution(const EmpiricalDistribution& other);
  EmpiricalDistribution& operator=(const EmpiricalDistribution& other);
  EmpiricalDistribution(EmpiricalDistribution&& other) noexcept;
  EmpiricalDistribution& operator=(EmpiricalDistribution&& other) noexcept;
  ~EmpiricalDistribution() = default;

  // Appends a sample; evicts the oldest one when at capacity. Rejects
  // negative or non-finite values.
  void add(double value);
  void clear();

  const std::deque<double>& samples() const { return samples_; }
  std::vector<double> to_vector() const {
    return {samples_.begin(), samples_.end()};
  }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t bucket_count() const { return bucket_count_; }

  double min() const;
  double max() const;
  double mean() const;

  // Throws Error("no data") when empty.
  const BucketGrid& grid() const;
  const std::vector<Bucket>& bucketize() const;
  std::size_t bucket_index(double value) const { return grid().index(value); }

  friend bool operator==(const EmpiricalDistribution& a,
                         const EmpiricalDistribution& b) {
    return a.capacity_ == b.capacity_ && a.bucket_count_ == b.bucket_count_ &&
           a.samples_ == b.samples_;
  }

 private:
  struct View {
    BucketGrid grid;
    std::vector<Bucket> buckets;
  };
  const View& view() const;

  std::deque<double> samples_;
  std::size_t capacity_;
  std::size_t bucket_count_;
  mutable std::shared_ptr<const View> view_;
  mutable std::mutex view_mutex_;
};

// Bucketizes an arbitrary sample list without going through the FIFO store.
std::vector<Bucket> bucketize(std::span<const double> samples,
                              std::size_t bucket_count);

}  // namespace pdsim
