#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "plap/field_grid.hpp"

using namespace plap;

TEST(GridSpec, SpacingAndNodes) {
  const auto p = GridSpec::line({0, 2 * M_PI}, 64, Boundary::Periodic);
  EXPECT_DOUBLE_EQ(p.spacing(0), 2 * M_PI / 64);
  EXPECT_EQ(p.node_count(), 64u);
  const auto d = GridSpec::rect({0, 1}, {-1, 1}, 11, 21, Boundary::Dirichlet);
  EXPECT_DOUBLE_EQ(d.spacing(0), 0.1);
  EXPECT_DOUBLE_EQ(d.spacing(1), 0.1);
  EXPECT_EQ(d.node_count(), 231u);
  EXPECT_TRUE(d.is_boundary({0, 5}));
  EXPECT_TRUE(d.is_boundary({3, 20}));
  EXPECT_FALSE(d.is_boundary({3, 5}));
  EXPECT_FALSE(p.is_boundary({0, 0}));
}

TEST(GridSpec, Validation) {
  EXPECT_THROW(GridSpec::line({0, 1}, 7, Boundary::Periodic), InvalidArgument);
  EXPECT_THROW(GridSpec::line({1, 1}, 16, Boundary::Periodic), InvalidArgument);
  EXPECT_THROW(GridSpec(3, {Interval{0, 1}, Interval{0, 1}}, {8, 8}, Boundary::Periodic), InvalidArgument);
  EXPECT_THROW(parse_boundary("neumann"), InvalidArgument);
}

TEST(GridSpec, FlatIndexRoundTrip) {
  const auto g = GridSpec::rect({0, 1}, {0, 1}, 9, 13, Boundary::Periodic);
  for (std::size_t k = 0; k < g.node_count(); ++k) EXPECT_EQ(g.flat(g.unflat(k)), k);
  EXPECT_EQ(g.flat({1, 0}), 13u);
}

TEST(GridSpec, RefinedKeepsNodes) {
  const auto d = GridSpec::line({0, 1}, 11, Boundary::Dirichlet);
  EXPECT_EQ(d.refined().resolution(0), 21);
  EXPECT_DOUBLE_EQ(d.refined().spacing(0), d.spacing(0) / 2);
  const auto p = GridSpec::line({0, 1}, 16, Boundary::Periodic);
  EXPECT_EQ(p.refined().resolution(0), 32);
}

TEST(Stencils, ExactOnQuadratics) {
  const auto g = GridSpec::rect({-1, 1}, {-1, 1}, 21, 21, Boundary::Dirichlet);
  auto f = [](const Vector& x, double) { return 1 + 2 * x[0] - x[1] + 3 * x[0] * x[0] + x[0] * x[1] - 2 * x[1] * x[1]; };
  const auto u = ScalarField::sample(g, f);
  const NodeIndex n{7, 12};
  const Vector x = g.coordinate(n);
  const Vector grad = gradient(u, n);
  EXPECT_NEAR(grad[0], 2 + 6 * x[0] + x[1], 1e-12);
  EXPECT_NEAR(grad[1], -1 + x[0] - 4 * x[1], 1e-12);
  const Matrix h = hessian(u, n);
  EXPECT_NEAR(h(0, 0), 6, 1e-10);
  EXPECT_NEAR(h(1, 1), -4, 1e-10);
  EXPECT_NEAR(h(0, 1), 1, 1e-10);
  EXPECT_NEAR(h(1, 0), 1, 1e-10);
  EXPECT_THROW(gradient(u, {0, 3}), InvalidArgument);
}

TEST(Stencils, PeriodicWrapSecondOrder) {
  // Central differences on sin: error ~ h^2 / 6.
  double prev = 0;
  for (int n : {32, 64, 128}) {
    const auto g = GridSpec::line({0, 2 * M_PI}, n, Boundary::Periodic);
    const auto u = ScalarField::sample(g, [](const Vector& x, double) { return std::sin(x[0]); });
    double err = 0;
    for (int i = 0; i < n; ++i) {
      const double x = g.coordinate({i, 0})[0];
      err = std::max(err, std::abs(gradient(u, {i, 0})[0] - std::cos(x)));
      err = std::max(err, std::abs(hessian(u, {i, 0})(0, 0) + std::sin(x)));
    }
    if (prev > 0) EXPECT_NEAR(prev / err, 4.0, 0.05);
    prev = err;
  }
}

TEST(Stencils, PointDerivatives3D) {
  Vector x(3);
  x << 0.2, -0.1, 0.4;
  auto f = [](const Vector& y) { return y[0] * y[1] + y[2] * y[2] * y[0]; };
  const auto d = stencil_derivatives(f, x, 1e-3);
  EXPECT_NEAR(d.gradient[0], x[1] + x[2] * x[2], 1e-9);
  EXPECT_NEAR(d.gradient[2], 2 * x[2] * x[0], 1e-9);
  EXPECT_NEAR(d.hessian(0, 1), 1.0, 1e-7);
  EXPECT_NEAR(d.hessian(0, 2), 2 * x[2], 1e-7);
  EXPECT_NEAR(d.hessian(2, 2), 2 * x[0], 1e-7);
}

TEST(ScalarField, RejectsBadValues) {
  const auto g = GridSpec::line({0, 1}, 8, Boundary::Periodic);
  EXPECT_THROW(ScalarField(g, std::vector<double>(7, 0.0)), InvalidArgument);
  std::vector<double> v(8, 0.0);
  v[3] = std::nan("");
  EXPECT_THROW(ScalarField(g, v), InvalidArgument);
  EXPECT_THROW(ScalarField(g, std::vector<double>(8, 0.0), -1.0), InvalidArgument);
}

TEST(Norms, SupDiffAndInject) {
  const auto g = GridSpec::line({0, 1}, 9, Boundary::Dirichlet);
  auto f = [](const Vector& x, double) { return x[0] * x[0]; };
  const auto a = ScalarField::sample(g, f);
  const auto fine = ScalarField::sample(g.refined(), f);
  EXPECT_EQ(sup_diff(a, inject(fine, g)), 0.0);
  EXPECT_DOUBLE_EQ(sup_norm(a), 1.0);
  EXPECT_THROW(sup_diff(a, fine), InvalidArgument);
  EXPECT_THROW(inject(a, g), InvalidArgument);
}

TEST(FieldCsv, RoundTripIsBitExact) {
  const auto g = GridSpec::rect({0, 1.5}, {-0.3, 0.7}, 9, 10, Boundary::Dirichlet);
  const auto u = ScalarField::sample(g, [](const Vector& x, double) { return std::exp(x[0]) * std::cos(3 * x[1]) / 7; }, 0.125);
  std::stringstream ss;
  write_field_csv(ss, u);
  const auto v = read_field_csv(ss);
  EXPECT_TRUE(v.grid() == g);
  EXPECT_EQ(v.time(), 0.125);
  EXPECT_EQ(v.values(), u.values());
}

TEST(FieldCsv, RejectsMalformedInput) {
  std::stringstream a("no header\n1\n");
  EXPECT_THROW(read_field_csv(a), InvalidArgument);
  std::stringstream b("# grid dim=1 extent=0,1 N=8 boundary=periodic time=0\n1\n2\n");
  EXPECT_THROW(read_field_csv(b), InvalidArgument);
  std::stringstream c("# grid dim=1 extent=0,x N=8 boundary=periodic time=0\n");
  EXPECT_THROW(read_field_csv(c), InvalidArgument);
}

TEST(FormatDouble, SeventeenDigits) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(short_double(0.5), "0.5");
}
