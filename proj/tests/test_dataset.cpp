#include "ivcate/dataset.hpp"
#include "ivcate/dgp.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

using namespace ivcate;
using testutil::error_kind;

namespace {

IvDataset parse(const std::string& text, const Schema& schema = Schema{}) {
  std::istringstream in(text);
  return read_csv(in, schema);
}

// independent rank oracle: average of sorted positions among equal values
std::vector<double> rank_oracle(const std::vector<double>& v, int q) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double frac = 0.5 * static_cast<double>(i + j) / static_cast<double>(n - 1);
    for (std::size_t k = i; k <= j; ++k) out[idx[k]] = std::round(frac * (q - 1)) / (q - 1);
    i = j + 1;
  }
  return out;
}

}  // namespace

TEST_CASE("minimal four-row csv") {
  const IvDataset d = parse("y,t,z,x0\n1,0,1,0.5\n2,1,0,0.25\n3,1,1,1\n4,0,0,2\n");
  CHECK(d.n() == 4);
  CHECK(d.d() == 1);
  CHECK(d.column_names == std::vector<std::string>{"x0"});
  CHECK(d.y[2] == 3.0);
  CHECK(d.x(3, 0) == 2.0);
}

TEST_CASE("non-finite outcome is a parse error naming the row") {
  const std::string msg = testutil::error_message([] { parse("y,t,z,x0\n1,0,1,0\nNaN,1,0,1\n3,1,1,1\n4,0,0,2\n"); });
  CHECK(msg.find("row 2") != std::string::npos);
  CHECK(error_kind([] { parse("y,t,z,x0\n1,0,1,0\nNaN,1,0,1\n3,1,1,1\n4,0,0,2\n"); }) == ErrorKind::parse);
  CHECK(error_kind([] { parse("y,t,z,x0\n1,0,1,0\nabc,1,0,1\n3,1,1,1\n4,0,0,2\n"); }) == ErrorKind::parse);
  CHECK(error_kind([] { parse("y,t,z,x0\n1,0,1,0\ninf,1,0,1\n3,1,1,1\n4,0,0,2\n"); }) == ErrorKind::parse);
}

TEST_CASE("schema and validation errors") {
  Schema s;
  s.instrument = "w";
  CHECK(error_kind([&] { parse("y,t,z,x0\n1,0,1,0\n2,1,0,1\n3,1,1,1\n4,0,0,2\n", s); }) == ErrorKind::schema);
  Schema b;
  b.binary = true;
  CHECK(error_kind([&] { parse("y,t,z,x0\n1,0,1,0\n2,2,0,1\n3,1,1,1\n4,0,0,2\n", b); }) == ErrorKind::validation);
  CHECK(error_kind([] { parse("y,t,z,x0\n1,0,1,0\n2,1,0,1\n3,1,1,1\n"); }) == ErrorKind::validation);
  CHECK(error_kind([] { parse("y,t,z\n1,0,1\n2,1,0\n3,1,1\n4,0,0\n"); }) == ErrorKind::schema);
}

TEST_CASE("categorical column one-hot encoded with dropped baseline") {
  Schema s;
  s.categorical.push_back({"os", "Windows"});
  const IvDataset d = parse("y,t,z,os,x\n1,0,1,Linux,1\n2,1,0,Windows,2\n3,1,1,OSX,3\n4,0,0,Linux,4\n", s);
  CHECK(d.d() == 3);
  const auto& names = d.column_names;
  CHECK(std::find(names.begin(), names.end(), "os_Linux") != names.end());
  CHECK(std::find(names.begin(), names.end(), "os_OSX") != names.end());
  CHECK(std::find(names.begin(), names.end(), "os_Windows") == names.end());
  const Index lin = std::find(names.begin(), names.end(), "os_Linux") - names.begin();
  CHECK(d.x(0, lin) == 1.0);
  CHECK(d.x(1, lin) == 0.0);
  Schema bad;
  bad.categorical.push_back({"os", "BeOS"});
  CHECK(error_kind([&] { parse("y,t,z,os\n1,0,1,Linux\n2,1,0,Windows\n3,1,1,OSX\n4,0,0,Linux\n", bad); }) ==
        ErrorKind::schema);
}

TEST_CASE("nlsym-shaped csv loads with 3010 rows and 22 features") {
  DgpSpec spec;
  spec.family = DgpFamily::nlsym;
  spec.n = 3010;
  const SimulatedData sim = generate(spec);
  std::stringstream buf;
  write_csv(buf, sim.data);
  const IvDataset d = read_csv(buf, Schema{});
  CHECK(d.n() == 3010);
  CHECK(d.d() == 22);
}

TEST_CASE("csv round trip is bit exact") {
  IvDataset d;
  const Index n = 50;
  d.x = testutil::uniform_matrix(n, 3, 5);
  d.x(0, 0) = 1e-300;
  d.x(1, 1) = -123456789.123456789;
  d.x(2, 2) = std::nextafter(1.0, 2.0);
  d.y = testutil::normal_vector(n, 6) * 1e7;
  d.t = testutil::normal_vector(n, 7);
  d.z = testutil::normal_vector(n, 8);
  d.t[3] = 5e-324;
  d.column_names = {"a", "b", "c"};
  std::stringstream buf;
  write_csv(buf, d);
  const IvDataset back = read_csv(buf, Schema{});
  CHECK(back.x == d.x);
  CHECK(back.y == d.y);
  CHECK(back.t == d.t);
  CHECK(back.z == d.z);
  CHECK(back.column_names == d.column_names);
}

TEST_CASE("quantile normalization examples") {
  Matrix a(4, 1);
  a << 1, 2, 3, 4;
  const Matrix qa = quantile_normalize(a, 4);
  CHECK(qa(0, 0) == doctest::Approx(0.0));
  CHECK(qa(1, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(qa(2, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(qa(3, 0) == doctest::Approx(1.0));

  Matrix c = Matrix::Constant(3, 1, 5.0);
  for (int q : {2, 10, 1000}) CHECK(quantile_normalize(c, q).isZero());
  CHECK(error_kind([&] { quantile_normalize(a, 1); }) == ErrorKind::argument);
}

TEST_CASE("quantile normalization matches a sort-based oracle and preserves order") {
  Rng rng(11);
  const Index n = 600;
  Matrix x(n, 2);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = std::exp(3.0 * standard_normal(rng));  // lognormal revenue
    x(i, 1) = static_cast<double>(uniform_index(rng, 29));  // heavy ties
  }
  const int q = 1000;
  const Matrix u = quantile_normalize(x, q);
  for (Index j = 0; j < 2; ++j) {
    std::vector<double> col(x.col(j).data(), x.col(j).data() + n);
    const auto oracle = rank_oracle(col, q);
    for (Index i = 0; i < n; ++i) CHECK(u(i, j) == doctest::Approx(oracle[static_cast<std::size_t>(i)]).epsilon(1e-12));
    CHECK(u.col(j).minCoeff() >= 0.0);
    CHECK(u.col(j).maxCoeff() <= 1.0);
  }
  // strict order preservation on the continuous column (Spearman 1)
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < n; k += 37) {
      if (x(i, 0) < x(k, 0)) CHECK(u(i, 0) < u(k, 0));
    }
  // idempotent
  CHECK(quantile_normalize(u, q) == u);
}

TEST_CASE("make_splits balance, partition and determinism") {
  const SplitPlan a = make_splits(4, 2, 7);
  CHECK(a.test_rows(0).size() == 2);
  CHECK(a.test_rows(1).size() == 2);
  const SplitPlan b = make_splits(5, 2, 7);
  std::multiset<std::size_t> sizes{b.test_rows(0).size(), b.test_rows(1).size()};
  CHECK(sizes == std::multiset<std::size_t>{2, 3});
  CHECK(make_splits(101, 3, 9).fold == make_splits(101, 3, 9).fold);
  CHECK(make_splits(101, 3, 9).fold != make_splits(101, 3, 10).fold);

  for (int k : {2, 3, 5}) {
    const SplitPlan p = make_splits(103, k, 1);
    std::vector<int> seen(103, 0);
    std::size_t lo = 1000, hi = 0;
    for (int f = 0; f < k; ++f) {
      const auto rows = p.test_rows(f);
      lo = std::min(lo, rows.size());
      hi = std::max(hi, rows.size());
      for (Index r : rows) ++seen[static_cast<std::size_t>(r)];
      CHECK(rows.size() + p.train_rows(f).size() == 103);
    }
    CHECK(hi - lo <= 1);
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  }
  CHECK(error_kind([] { make_splits(2, 3, 0); }) == ErrorKind::argument);
  CHECK(error_kind([] { make_splits(10, 1, 0); }) == ErrorKind::argument);
}

TEST_CASE("standardize_continuous leaves binary columns alone") {
  Matrix x(6, 2);
  x << 1, 0, 2, 1, 3, 0, 4, 1, 5, 1, 6, 0;
  const Matrix s = standardize_continuous(x);
  CHECK(s.col(1) == x.col(1));
  CHECK(std::fabs(s.col(0).mean()) < 1e-12);
}

TEST_CASE("file round trip through save and load") {
  IvDataset d;
  d.x = testutil::uniform_matrix(8, 2, 3);
  d.y = testutil::normal_vector(8, 1);
  d.t = testutil::normal_vector(8, 2);
  d.z = testutil::normal_vector(8, 4);
  d.column_names = {"u", "v"};
  const auto path = std::filesystem::temp_directory_path() / "ivcate_test_roundtrip.csv";
  save_csv(path, d);
  const IvDataset back = load_csv(path, Schema{});
  std::filesystem::remove(path);
  CHECK(back.x == d.x);
  CHECK(back.y == d.y);
  CHECK(error_kind([] { load_csv("/nonexistent/file.csv", Schema{}); }) == ErrorKind::argument);
}
