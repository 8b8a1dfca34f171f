#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace hidden_agg {

using Rng = std::mt19937_64;

//! Derives an independent stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt);

//! Uniform integer in [0, n). Rejection sampling, so identical across standard libraries.
std::uint64_t uniform_index(Rng &rng, std::uint64_t n);

//! Uniform double in [0, 1) built from the top 53 bits.
double uniform01(Rng &rng);

//! `count` distinct indices from [0, n), uniformly, in selection order.
std::vector<std::size_t> sample_without_replacement(Rng &rng, std::size_t n, std::size_t count);

template <class T>
void shuffle_in_place(Rng &rng, std::vector<T> &items) {
	for (std::size_t i = items.size(); i > 1; --i) {
		std::swap(items[i - 1], items[uniform_index(rng, i)]);
	}
}

} // namespace hidden_agg
