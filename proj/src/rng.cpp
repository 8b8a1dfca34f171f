#include "hidden_agg/rng.hpp"

#include <limits>
#include <unordered_map>

namespace hidden_agg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
	x += 0x9e3779b97f4a7c15ULL;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

} // namespace

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
	return splitmix64(splitmix64(base) ^ (salt * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
}

std::uint64_t uniform_index(Rng &rng, std::uint64_t n) {
	if (n <= 1) {
		return 0;
	}
	const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
	std::uint64_t draw;
	do {
		draw = rng();
	} while (draw >= limit);
	return draw % n;
}

double uniform01(Rng &rng) {
	return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<std::size_t> sample_without_replacement(Rng &rng, std::size_t n, std::size_t count) {
	if (count > n) {
		count = n;
	}
	// partial Fisher-Yates over a sparse swap map, so cost is O(count)
	std::unordered_map<std::size_t, std::size_t> swapped;
	std::vector<std::size_t> out;
	out.reserve(count);
	auto at = [&](std::size_t i) {
		auto it = swapped.find(i);
		return it == swapped.end() ? i : it->second;
	};
	for (std::size_t i = 0; i < count; ++i) {
		std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
		std::size_t vi = at(i);
		std::size_t vj = at(j);
		swapped[j] = vi;
		out.push_back(vj);
	}
	return out;
}

} // namespace hidden_agg
