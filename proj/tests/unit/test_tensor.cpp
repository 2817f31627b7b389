#include <doctest.h>

#include "dyslab/tensor.hpp"
#include "support/check.hpp"

using namespace dyslab;
using dyslab::testing::error_of;

TEST_CASE("tensor construction and access") {
  Tensor t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.sum() == doctest::Approx(9.0));
  t.at(1, 2) = -4.0f;
  CHECK(t[5] == -4.0f);
  CHECK(t.min() == -4.0f);
  CHECK(t.max() == 1.5f);

  Tensor c({2, 2, 2});
  c.at(1, 0, 1) = 7.0f;
  CHECK(c[5] == 7.0f);
}

TEST_CASE("tensor shape checks") {
  CHECK(error_of([] { Tensor({2, 2}, std::vector<real>(3)); }) == "ShapeMismatch");
  CHECK(error_of([] { Tensor({4}).reshaped({3}); }) == "ShapeMismatch");
  CHECK(Tensor({4}, 2.0f).reshaped({2, 2}).shape() == Shape{2, 2});
  CHECK(error_of([] { Tensor::from_rows({{1, 2}, {3}}); }) == "ShapeMismatch");
  CHECK(shape_to_string({1, 64, 64}) == "[1x64x64]");
}
