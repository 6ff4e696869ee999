#include "rwre/walk.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rwre {

std::vector<std::int64_t> WalkPath::positions() const {
  std::vector<std::int64_t> out;
  out.reserve(steps.size() + 1);
  std::int64_t x = start;
  out.push_back(x);
  for (auto z : steps) {
    x += z;
    out.push_back(x);
  }
  return out;
}

WalkPath path_from_steps(const std::vector<int>& steps) {
  WalkPath path;
  path.hit_times.push_back(0);
  std::int64_t x = 0;
  std::int64_t top = 0;
  for (int z : steps) {
    if (z != 1 && (z >= 0 || z < -kMaxL)) throw Error(ErrorKind::InvalidSpec, "jump out of range");
    path.steps.push_back(static_cast<std::int8_t>(z));
    x += z;
    if (x > top) {
      top = x;
      path.hit_times.push_back(path.length());
    }
  }
  return path;
}

namespace {

rng::Stream walk_stream(const EnvWindow& env, std::uint64_t walk_seed) {
  return rng::Stream(walk_seed, rng::Domain::Walk, env.seed());
}

[[noreturn]] void max_steps_exceeded(std::int64_t max_steps, std::int64_t x, std::int64_t n) {
  throw Error(ErrorKind::MaxStepsExceeded, "no visit to " + std::to_string(n) + " within " +
                                               std::to_string(max_steps) + " steps; final position " +
                                               std::to_string(x));
}

}  // namespace

WalkPath simulate_to_level(EnvWindow& env, std::int64_t n, std::uint64_t walk_seed, std::int64_t max_steps) {
  if (n < 1) throw Error(ErrorKind::InvalidSpec, "target level must be at least 1");
  rng::Stream stream = walk_stream(env, walk_seed);
  WalkPath path;
  path.hit_times.reserve(static_cast<std::size_t>(n) + 1);
  path.hit_times.push_back(0);
  std::int64_t x = 0;
  std::int64_t t = 0;
  while (x < n) {
    if (t >= max_steps) max_steps_exceeded(max_steps, x, n);
    const int z = env.site_law(x).sample_jump(stream);
    path.steps.push_back(static_cast<std::int8_t>(z));
    x += z;
    ++t;
    // Up-jumps have size one, so a new maximum is always a first visit.
    if (x == path.target() + 1) path.hit_times.push_back(t);
  }
  return path;
}

std::int64_t hitting_time(EnvWindow& env, std::int64_t n, std::uint64_t walk_seed, std::int64_t max_steps) {
  if (n < 1) throw Error(ErrorKind::InvalidSpec, "target level must be at least 1");
  rng::Stream stream = walk_stream(env, walk_seed);
  std::int64_t x = 0;
  std::int64_t t = 0;
  while (x < n) {
    if (t >= max_steps) max_steps_exceeded(max_steps, x, n);
    x += env.site_law(x).sample_jump(stream);
    ++t;
  }
  return t;
}

std::int64_t position_after(EnvWindow& env, std::int64_t t, std::uint64_t walk_seed) {
  rng::Stream stream = walk_stream(env, walk_seed);
  std::int64_t x = 0;
  for (std::int64_t s = 0; s < t; ++s) x += env.site_law(x).sample_jump(stream);
  return x;
}

// ---------------------------------------------------------------------------

Counts StepTable::row(std::int64_t i) const {
  const auto it = U.find(i);
  return it == U.end() ? Counts::Zero(L) : it->second;
}

Counts StepTable::piece(std::int64_t k, std::int64_t i) const {
  if (i > k) return Counts::Zero(L);
  if (i == k) return unit_row<std::int64_t>(1, L);
  const auto it = per_piece.find({k, i});
  return it == per_piece.end() ? Counts::Zero(L) : it->second;
}

std::int64_t StepTable::total_abs() const {
  std::int64_t s = 0;
  for (const auto& [i, u] : U) s += u.sum();
  return s;
}

std::int64_t StepTable::total_first() const {
  std::int64_t s = 0;
  for (const auto& [i, u] : U) s += u(0);
  return s;
}

std::int64_t StepTable::weighted_total() const {
  const LCol<std::int64_t> w = x0<std::int64_t>(L);
  std::int64_t s = 0;
  for (const auto& [i, u] : U) s += u.dot(w);
  return s;
}

namespace {

void check_path(const WalkPath& path, int L) {
  if (L < 1 || L > kMaxL) throw Error(ErrorKind::InvalidSpec, "L out of range");
  for (auto z : path.steps) {
    if (z != 1 && (z >= 0 || z < -L)) throw Error(ErrorKind::InvalidSpec, "path has a jump outside {-L..-1, +1}");
  }
}

void bump(std::map<std::int64_t, Counts>& rows, std::int64_t i, int type, int L) {
  auto it = rows.find(i);
  if (it == rows.end()) it = rows.emplace(i, Counts::Zero(L)).first;
  ++it->second(type - 1);
}

}  // namespace

StepTable step_table(const WalkPath& path, int L) {
  check_path(path, L);
  StepTable table;
  table.n = path.target();
  table.L = L;
  std::int64_t x = path.start;
  for (auto z : path.steps) {
    const std::int64_t h = x + z;
    // A jump from x down to h crosses or reaches every level h..x-1; at
    // level i it is a type (i - h + 1) particle.
    for (std::int64_t i = h; i < x; ++i) bump(table.U, i, static_cast<int>(i - h + 1), L);
    x = h;
  }
  table.min_site = table.U.empty() ? table.n : table.U.begin()->first;
  return table;
}

void decompose_pieces(const WalkPath& path, StepTable& table) {
  check_path(path, table.L);
  table.per_piece.clear();
  std::int64_t x = path.start;
  std::int64_t k = 0;  // running maximum = index of the current piece
  for (auto z : path.steps) {
    const std::int64_t h = x + z;
    for (std::int64_t i = h; i < x; ++i) {
      auto key = std::make_pair(k, i);
      auto it = table.per_piece.find(key);
      if (it == table.per_piece.end()) it = table.per_piece.emplace(key, Counts::Zero(table.L)).first;
      ++it->second(static_cast<int>(i - h));
    }
    x = h;
    k = std::max(k, x);
  }
}

std::map<std::int64_t, Counts> recount_from_definition(const WalkPath& path, int L) {
  check_path(path, L);
  const auto pos = path.positions();
  const std::int64_t lo = *std::min_element(pos.begin(), pos.end());
  const std::int64_t n = path.target();
  std::map<std::int64_t, Counts> rows;
  for (std::int64_t i = lo; i < n; ++i) {
    for (int l = 1; l <= L; ++l) {
      std::int64_t count = 0;
      for (std::size_t m = 1; m < pos.size(); ++m) {
        if (pos[m - 1] > i && pos[m] == i - l + 1) ++count;
      }
      if (count > 0) {
        auto it = rows.find(i);
        if (it == rows.end()) it = rows.emplace(i, Counts::Zero(L)).first;
        it->second(l - 1) = count;
      }
    }
  }
  return rows;
}

double offspring_pmf(const JumpLaw& law, const Counts& u) {
  if (u.size() != law.L() || (u.array() < 0).any()) return 0.0;
  // (|u|)! / prod u_l! * prod w(-l)^{u_l} * w(+1)
  double log_p = std::log(law.up()) + std::lgamma(static_cast<double>(u.sum()) + 1.0);
  for (int l = 1; l <= law.L(); ++l) {
    const auto c = u(l - 1);
    if (c == 0) continue;
    if (law.down(l) <= 0.0) return 0.0;
    log_p += static_cast<double>(c) * std::log(law.down(l)) - std::lgamma(static_cast<double>(c) + 1.0);
  }
  return std::exp(log_p);
}

namespace {

// All nonnegative L-vectors with total <= max_total, in a fixed order.
std::vector<Counts> enumerate_cells(int L, int max_total) {
  std::vector<Counts> out;
  Counts u = Counts::Zero(L);
  for (;;) {
    if (u.sum() <= max_total) out.push_back(u);
    int j = 0;
    while (j < L) {
      if (u.sum() < max_total) {
        ++u(j);
        break;
      }
      u(j) = 0;
      ++j;
    }
    if (j == L) break;
  }
  return out;
}

}  // namespace

OffspringLawCheck offspring_law_check(EnvWindow& env, std::int64_t n, int n_paths, std::uint64_t walk_seed,
                                      int max_total) {
  const int L = env.L();
  const auto cells = enumerate_cells(L, max_total);
  const auto cell_of = [&](const Counts& u) -> std::size_t {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c] == u) return c;
    }
    return cells.size();
  };
  OffspringLawCheck out;
  out.observed.assign(cells.size() + 1, 0.0);
  out.expected.assign(cells.size() + 1, 0.0);
  const Counts e1 = unit_row<std::int64_t>(1, L);
  for (int p = 0; p < n_paths; ++p) {
    const WalkPath path = simulate_to_level(env, n, rng::derive_key(walk_seed, rng::Domain::Walk,
                                                                   static_cast<std::uint64_t>(p)));
    StepTable table = step_table(path, L);
    decompose_pieces(path, table);
    for (std::int64_t k = 0; k < n; ++k) {
      for (std::int64_t i = k; i >= table.min_site; --i) {
        if (table.piece(k, i) != e1) continue;
        const JumpLaw& law = env.site_law(i);
        ++out.parents;
        out.observed[cell_of(table.piece(k, i - 1))] += 1.0;
        double covered = 0.0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
          const double q = offspring_pmf(law, cells[c]);
          out.expected[c] += q;
          covered += q;
        }
        out.expected[cells.size()] += std::max(0.0, 1.0 - covered);
      }
    }
  }
  if (out.parents == 0) throw Error(ErrorKind::EmptySample, "no single-particle pieces observed");
  out.chi2 = stats::chi_square_gof(out.observed, out.expected);
  return out;
}

}  // namespace rwre
