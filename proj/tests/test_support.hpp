#pragma once

// Shared fixtures for the unit tests.

#include <cstdint>
#include <random>
#include <vector>

#include "mspld/mspld.hpp"

namespace mspld::fixtures {

/// Small but non-trivial scene: fast enough to train on in every test.
inline SceneSpec small_scene(int images = 48, int test_images = 24) {
    SceneSpec s;
    s.num_images = images;
    s.num_test_images = test_images;
    s.num_classes = 3;
    s.instance_noise = 1.0;
    return s;
}

inline DatasetSplit small_dataset(std::uint64_t seed = 5, int images = 48, int test_images = 24, int k = 3) {
    auto d = generate_synthetic_dataset(small_scene(images, test_images), seed);
    return sample_initial_labels(d, k, seed);
}

/// Uniform random box with integer corners inside [0, extent).
inline BBox random_int_box(std::mt19937_64& rng, int extent) {
    std::uniform_int_distribution<int> pos(0, extent);
    int a = pos(rng), b = pos(rng), c = pos(rng), d = pos(rng);
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    return BBox{double(a), double(c), double(b), double(d)};
}

inline std::vector<DetectorSpec> three_views() {
    DetectorSpec a{Family::prototype, {0, 1, 2, 3, 4, 5, 6, 7}};
    DetectorSpec b{Family::linear, {4, 5, 6, 7, 8, 9, 10, 11}};
    DetectorSpec c{Family::histogram, {0, 1, 2, 3, 8, 9, 10, 11}};
    return {a, b, c};
}

}  // namespace mspld::fixtures
