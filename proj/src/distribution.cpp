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

#include "pdsim/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pdsim/common.hpp"

namespace pdsim {

std::size_t BucketGrid::index(double value) const {
  if (degenerate() || value <= min) return 0;
  if (value >= max) return count - 1;
  auto i = static_cast<std::size_t>(std::floor((value - min) / width()));
  return std::min(i, count - 1);
}

std::vector<double> BucketGrid::boundaries() const {
  if (degenerate()) return {min};
  std::vector<double> out(count + 1);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = min + width() * static_cast<double>(i);
  }
  out[count] = max;
  return out;
}

namespace {

BucketGrid make_grid(double lo, double hi, std::size_t bucket_count) {
  BucketGrid g;
  g.min = lo;
  g.max = hi;
  g.count = hi > lo ? bucket_count : 1;
  return g;
}

template <typename Range>
std::vector<Bucket> fill_buckets(const BucketGrid& grid, const Range& samples) {
  std::vector<std::size_t> counts(grid.count, 0);
  for (double v : samples) ++counts[grid.index(v)];
  const auto n = static_cast<double>(std::size(samples));
  auto bounds = grid.boundaries();
  std::vector<Bucket> out(grid.count);
  for (std::size_t i = 0; i < grid.count; ++i) {
    out[i].lower = bounds[i];
    out[i].upper = grid.degenerate() ? bounds[0] : bounds[i + 1];
    out[i].probability = static_cast<double>(counts[i]) / n;
  }
  return out;
}

}  // namespace

EmpiricalDistribution::EmpiricalDistribution(std::size_t capacity,
                                             std::size_t bucket_count)
    : capacity_(capacity), bucket_count_(bucket_count) {
  if (capacity_ == 0) throw Error("distribution capacity must be positive");
  if (bucket_count_ == 0) throw Error("bucket count must be positive");
}

EmpiricalDistribution::EmpiricalDistribution(std::span<const double> samples,
                                             std::size_t capacity,
                                             std::size_t bucket_count)
    : EmpiricalDistribution(capacity, bucket_count) {
  for (double v : samples) add(v);
}

EmpiricalDistribution::EmpiricalDistribution(const EmpiricalDistribution& other)
    : samples_(other.samples_),
      capacity_(other.capacity_),
      bucket_count_(other.bucket_count_) {}

EmpiricalDistribution& EmpiricalDistribution::operator=(
    const EmpiricalDistribution& other) {
  if (this != &other) {
    samples_ = other.samples_;
    capacity_ = other.capacity_;
    bucket_count_ = other.bucket_count_;
    std::lock_guard lock(view_mutex_);
    view_.reset();
  }
  return *this;
}

EmpiricalDistribution::EmpiricalDistribution(
    EmpiricalDistribution&& other) noexcept
    : samples_(std::move(other.samples_)),
      capacity_(other.capacity_),
      bucket_count_(other.bucket_count_) {}

EmpiricalDistribution& EmpiricalDistribution::operator=(
    EmpiricalDistribution&& other) noexcept {
  if (this != &other) {
    samples_ = std::move(other.samples_);
    capacity_ = other.capacity_;
    bucket_count_ = other.bucket_count_;
    std::lock_guard lock(view_mutex_);
    view_.reset();
  }
  return *this;
}

void EmpiricalDistribution::add(double value) {
  if (!std::isfinite(value) || value < 0.0) {
    throw Error("distribution samples must be finite and non-negative");
  }
  if (samples_.size() == capacity_) samples_.pop_front();
  samples_.push_back(value);
  std::lock_guard lock(view_mutex_);
  view_.reset();
}

void EmpiricalDistribution::clear() {
  samples_.clear();
  std::lock_guard lock(view_mutex_);
  view_.reset();
}

double EmpiricalDistribution::min() const {
  if (empty()) throw Error("no data");
  return *std::min_element(samples_.begin(), samples_.end());
}

double EmpiricalDistribution::max() const {
  if (empty()) throw Error("no data");
  return *std::max_element(samples_.begin(), samples_.end());
}

double EmpiricalDistribution::mean() const {
  if (empty()) throw Error("no data");
  return std::accumulate(samples_.begin(), samples_.end(), 0.0) /
         static_cast<double>(samples_.size());
}

const EmpiricalDistribution::View& EmpiricalDistribution::view() const {
  std::lock_guard lock(view_mutex_);
  if (!view_) {
    if (samples_.empty()) throw Error("no data");
    auto [lo, hi] = std::minmax_element(samples_.begin(), samples_.end());
    auto v = std::make_shared<View>();
    v->grid = make_grid(*lo, *hi, bucket_count_);
    v->buckets = fill_buckets(v->grid, samples_);
    view_ = std::move(v);
  }
  return *view_;
}

const BucketGrid& EmpiricalDistribution::grid() const { return view().grid; }

const std::vector<Bucket>& EmpiricalDistribution::bucketize() const {
  return view().buckets;
}

std::vector<Bucket> bucketize(std::span<const double> samples,
                              std::size_t bucket_count) {
  if (samples.empty()) throw Error("no data");
  if (bucket_count == 0) throw Error("bucket count must be positive");
  auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  return fill_buckets(make_grid(*lo, *hi, bucket_count), samples);
}

}  // namespace pdsim
