#include "snpla/rng.hpp"

namespace snpla {

namespace {

// FNV-1a, used only to mix stream names into seeds.
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

RngStream RngStream::named(std::uint64_t run_seed, std::string_view stream) {
  std::uint64_t derived = splitmix64(run_seed ^ fnv1a(stream));
  RngStream r(derived);
  r.base_ = derived;
  return r;
}

RngStream RngStream::split(std::uint64_t index) const {
  std::uint64_t derived = splitmix64(base_ + 0x632be59bd9b4e019ull * (index + 1));
  RngStream r(derived);
  r.base_ = derived;
  return r;
}

Eigen::MatrixXd RngStream::normal_matrix(int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

Eigen::VectorXd RngStream::uniform_vector(const Eigen::VectorXd& a,
                                          const Eigen::VectorXd& b) {
  Eigen::VectorXd v(a.size());
  for (int j = 0; j < a.size(); ++j) v(j) = uniform(a(j), b(j));
  return v;
}

}  // namespace snpla
