#include "mfbo/sobol.hpp"

#include <array>
#include <bit>

namespace mfbo {
namespace {

constexpr int kBits = 32;

// Polynomials are bit masks including leading and trailing 1, e.g. x^3+x+1 = 0b1011.
struct DimensionInit {
  std::uint32_t poly;
  std::vector<std::uint32_t> m;
};

// Classic initialization for the first few dimensions (after van der Corput).
const std::array<DimensionInit, 4> kClassicDims = {{
    {0b11, {1}},          // x + 1
    {0b111, {1, 3}},      // x^2 + x + 1
    {0b1011, {1, 3, 1}},  // x^3 + x + 1
    {0b1101, {1, 1, 1}},  // x^3 + x^2 + 1
}};

int poly_degree(std::uint32_t p) { return 31 - std::countl_zero(p); }

// Multiplication in GF(2)[x] modulo the field polynomial `mod`.
std::uint32_t gf2_mulmod(std::uint32_t a, std::uint32_t b, std::uint32_t mod) {
  int deg = poly_degree(mod);
  std::uint64_t acc = 0, aa = a;
  while (b) {
    if (b & 1) acc ^= aa;
    aa <<= 1;
    b >>= 1;
  }
  for (int i = 62; i >= deg; --i) {
    if (acc >> i & 1) acc ^= static_cast<std::uint64_t>(mod) << (i - deg);
  }
  return static_cast<std::uint32_t>(acc);
}

std::uint32_t gf2_powmod(std::uint32_t base, std::uint64_t e, std::uint32_t mod) {
  std::uint32_t r = 1;
  while (e) {
    if (e & 1) r = gf2_mulmod(r, base, mod);
    base = gf2_mulmod(base, base, mod);
    e >>= 1;
  }
  return r;
}

bool is_irreducible(std::uint32_t p) {
  int s = poly_degree(p);
  // p irreducible iff x^(2^s) == x mod p and gcd-style checks for proper factors,
  // tested via x^(2^k) != x for k < s dividing s.
  std::uint32_t x = 0b10;
  std::uint32_t t = x;
  for (int k = 1; k <= s; ++k) {
    t = gf2_mulmod(t, t, p);  // t = x^(2^k)
    if (k < s && s % k == 0 && t == x) return false;
    if (k == s && t != x) return false;
  }
  return true;
}

const std::uint64_t kMersenneFactors[9][3] = {
    {0, 0, 0}, {1, 0, 0},  {3, 0, 0},   {7, 0, 0},   {3, 5, 0},
    {31, 0, 0}, {3, 7, 0}, {127, 0, 0}, {3, 5, 17},
};

bool is_primitive(std::uint32_t p) {
  if (!is_irreducible(p)) return false;
  int s = poly_degree(p);
  std::uint64_t order = (1ULL << s) - 1;
  if (gf2_powmod(0b10, order, p) != 1) return false;
  for (std::uint64_t q : kMersenneFactors[s]) {
    if (q == 0) break;
    if (q < order && gf2_powmod(0b10, order / q, p) == 1) return false;
  }
  return true;
}

// Primitive polynomials of degree 1,2,3,... in ascending numeric order,
// enough for 64 dimensions.
std::vector<std::uint32_t> primitive_polynomials(int count) {
  std::vector<std::uint32_t> polys;
  for (int s = 1; static_cast<int>(polys.size()) < count && s <= 10; ++s) {
    for (std::uint32_t p = (1u << s) | 1u; p < (2u << s); p += 2) {
      if (is_primitive(p)) {
        polys.push_back(p);
        if (static_cast<int>(polys.size()) == count) break;
      }
    }
  }
  return polys;
}

std::vector<std::vector<std::uint32_t>> build_directions(int dim) {
  std::vector<std::vector<std::uint32_t>> dirs(dim, std::vector<std::uint32_t>(kBits));
  // Dimension 1: van der Corput, v_b = 2^(32-b).
  for (int b = 0; b < kBits; ++b) dirs[0][b] = 1u << (kBits - 1 - b);

  std::vector<std::uint32_t> polys = primitive_polynomials(dim);  // ascending degree
  Rng init_rng(0x536f626f6cULL);
  for (int d = 1; d < dim; ++d) {
    std::uint32_t poly;
    std::vector<std::uint32_t> m;
    if (d - 1 < static_cast<int>(kClassicDims.size())) {
      poly = kClassicDims[d - 1].poly;
      m = kClassicDims[d - 1].m;
    } else {
      poly = polys[d - 1];
      int s = poly_degree(poly);
      m.resize(s);
      for (int i = 0; i < s; ++i) {
        // Any odd value below 2^(i+1) is admissible; fixed-seed choice keeps
        // the sequence reproducible everywhere.
        std::uint64_t r = init_rng() >> 11;
        m[i] = static_cast<std::uint32_t>((r % (1u << i)) * 2 + 1);
      }
    }
    int s = poly_degree(poly);
    for (int i = 0; i < kBits; ++i) {
      if (i < s) {
        dirs[d][i] = m[i] << (kBits - 1 - i);
      } else {
        std::uint32_t v = dirs[d][i - s];
        v ^= v >> s;
        for (int k = 1; k < s; ++k) {
          if (poly >> (s - k) & 1) v ^= dirs[d][i - k];
        }
        dirs[d][i] = v;
      }
    }
  }
  return dirs;
}

}  // namespace

SobolSequence::SobolSequence(int dim) : dim_(dim) {
  if (dim < 1 || dim > 64) throw ArgumentError("SobolSequence: dim must be in [1, 64]");
  state_.assign(dim, 0);
  direction_ = build_directions(dim);
}

Vector SobolSequence::next() {
  // Gray-code stepping; index 0 (the origin) is never emitted.
  ++index_;
  int bit = std::countr_zero(index_);
  for (int d = 0; d < dim_; ++d) state_[d] ^= direction_[d][bit];
  Vector out(dim_);
  constexpr double scale = 1.0 / 4294967296.0;  // 2^-32
  for (int d = 0; d < dim_; ++d) out[d] = state_[d] * scale;
  return out;
}

Matrix SobolSequence::take(int n) {
  Matrix out(n, dim_);
  for (int i = 0; i < n; ++i) out.row(i) = next().transpose();
  return out;
}

Matrix sobol_grid(int n, int dim) { return SobolSequence(dim).take(n); }

}  // namespace mfbo
