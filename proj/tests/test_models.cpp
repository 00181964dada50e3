#include <cmath>
#include <random>

#include <Eigen/SVD>

#include "doctest.h"
#include "otws/models.hpp"

using namespace otws;

namespace {

Tensor2 random_tensor(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor2 t(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) t(i, j) = normal(rng);
  return t;
}

double svd_top(const Matrix& m) { return Eigen::JacobiSVD<Matrix>(m).singularValues()[0]; }

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("config validation") {
    CHECK_NOTHROW(GeneratorConfig{}.validate());
    GeneratorConfig g = GeneratorConfig::for_grid(14, 7);
    CHECK(g.n == 196);
    CHECK(g.latent_dim == 98);
    g.lambda = 1.0;
    CHECK_THROWS_AS(g.validate(), InvalidArgument);
    g = GeneratorConfig::for_grid(14, 7);
    g.c = 0.0;
    CHECK_THROWS_AS(g.validate(), InvalidArgument);
    g = GeneratorConfig::for_grid(14, 7);
    g.latent_dim = 10;  // halves of 5 are not square
    CHECK_THROWS_AS(Generator{g}, InvalidArgument);
    CHECK(ApproximatorConfig{196}.hidden() == 1176);
  }

  TEST_CASE("bilinear interpolation") {
    const Matrix same = bilinear_interpolation_matrix(4, 4);
    CHECK(same.isApprox(Matrix::Identity(16, 16)));
    const Matrix up = bilinear_interpolation_matrix(2, 3);
    CHECK(up.rows() == 9);
    CHECK(up.cols() == 4);
    CHECK((up.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-15);
    Vector img(4);
    img << 0.0, 1.0, 2.0, 3.0;  // value = x + 2 y, reproduced exactly
    const Vector out = up * img;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) CHECK(out[r * 3 + c] == doctest::Approx(0.5 * c + 1.0 * r).epsilon(1e-15));
  }

  TEST_CASE("generator outputs") {
    const GeneratorConfig cfg = GeneratorConfig::for_grid(6, 3);
    Generator gen(cfg);
    gen.net().weight.setZero();
    gen.net().bias.setZero();
    const Tensor2 zero = gen.apply(Tensor2::Zero(1, cfg.latent_dim));
    CHECK((zero.array() - 1.0 / 36).abs().maxCoeff() <= 1e-15);

    std::mt19937_64 rng(51);
    gen.init(rng);
    const Tensor2 out = gen.apply(random_tensor(rng, 20, cfg.latent_dim, 3.0));
    CHECK(out.minCoeff() > 0.0);
    for (int r = 0; r < 20; ++r) {
      CHECK(std::abs(out.row(r).head(36).sum() - 1.0) <= 1e-12);
      CHECK(std::abs(out.row(r).tail(36).sum() - 1.0) <= 1e-12);
    }
    const auto grid = make_grid(6, 6);
    const auto pair = gen.generate(random_tensor(rng, 1, cfg.latent_dim).row(0).transpose(), grid);
    CHECK(pair.first.strictly_positive());
    CHECK(pair.second.size() == 36);
  }

  TEST_CASE("generator backward against finite differences") {
    const GeneratorConfig cfg = GeneratorConfig::for_grid(4, 2);
    Generator gen(cfg);
    std::mt19937_64 rng(52);
    gen.init(rng);
    const Tensor2 z = random_tensor(rng, 5, cfg.latent_dim);
    const Tensor2 target = random_tensor(rng, 5, 2 * cfg.n, 0.05);
    gen.zero_grad();
    const Tensor2 dz = gen.backward(mse_grad(gen.forward(z), target));
    for (const ParamView& p : gen.parameters()) {
      for (Eigen::Index k = 0; k < p.size; ++k) {
        const double original = p.value[k];
        const double h = 1e-6 * std::max(1.0, std::abs(original));
        p.value[k] = original + h;
        const double up = mse(gen.apply(z), target);
        p.value[k] = original - h;
        const double down = mse(gen.apply(z), target);
        p.value[k] = original;
        const double numeric = (up - down) / (2 * h);
        CHECK(std::abs(numeric - p.grad[k]) <= std::max(1e-7, 1e-5 * std::abs(numeric)));
      }
    }
    Tensor2 probe = z;
    for (int j = 0; j < cfg.latent_dim; ++j) {
      const double h = 1e-6;
      probe(2, j) = z(2, j) + h;
      const double up = mse(gen.apply(probe), target);
      probe(2, j) = z(2, j) - h;
      const double down = mse(gen.apply(probe), target);
      probe(2, j) = z(2, j);
      const double numeric = (up - down) / (2 * h);
      CHECK(std::abs(numeric - dz(2, j)) <= std::max(1e-7, 1e-5 * std::abs(numeric)));
    }
  }

  TEST_CASE("approximator") {
    Approximator approx(ApproximatorConfig{9});
    std::mt19937_64 rng(53);
    approx.init(rng);
    CHECK(approx.linear(0).in_features() == 18);
    CHECK(approx.linear(0).out_features() == 54);
    CHECK(approx.linear(2).out_features() == 9);
    const DiscreteMeasure mu(Vector::Constant(9, 1.0 / 9));
    const Vector f = approx.predict(mu, mu);
    CHECK(f.size() == 9);
    CHECK(approx.predict(mu, mu) == f);
    approx.linear(2).weight.setZero();
    approx.linear(2).bias.setZero();
    CHECK(approx.predict(mu, mu) == Vector::Zero(9));
    const Tensor2 input = pair_input(mu, mu);
    CHECK(input.cols() == 18);
    CHECK_THROWS_AS(approx.predict(DiscreteMeasure(Vector::Constant(4, 0.25)), mu), InvalidArgument);
  }

  TEST_CASE("spectral norm and rescale") {
    std::mt19937_64 rng(54);
    for (int t = 0; t < 5; ++t) {
      const Matrix w = random_tensor(rng, 6 + t, 4 + t);
      CHECK(std::abs(spectral_norm(w) - svd_top(w)) <= 1e-8 * svd_top(w));
    }
    Matrix two = random_tensor(rng, 5, 5);
    two *= 2.0 / svd_top(two);
    LinearLayer layer(5, 5);
    layer.weight = two;
    layer.bias.setOnes();
    const LinearLayer scaled = spectral_rescale(layer, 0.3);
    CHECK(std::abs(svd_top(scaled.weight) - 0.3) <= 1e-6);
    CHECK(scaled.bias == layer.bias);
    layer.weight = two * 0.1;
    CHECK(spectral_rescale(layer, 0.3).weight == layer.weight);
    layer.weight.setZero();
    CHECK(spectral_rescale(layer, 0.3).weight == Matrix::Zero(5, 5));
    CHECK(spectral_norm(Matrix::Zero(3, 3)) == 0.0);
  }

  TEST_CASE("lipschitz estimates") {
    std::mt19937_64 rng(55);
    const Matrix a = random_tensor(rng, 4, 4);
    const double top = svd_top(a);
    const PairSampler gaussian = [](std::mt19937_64& r) {
      std::normal_distribution<double> normal;
      Vector x(4), y(4);
      for (int k = 0; k < 4; ++k) {
        x[k] = normal(r);
        y[k] = normal(r);
      }
      return std::make_pair(x, y);
    };
    const LipschitzEstimate linear = lipschitz_estimate([&](const Vector& x) { return Vector(a * x); }, gaussian, 20000, 1);
    CHECK(linear.max_ratio <= top * (1 + 1e-12));
    CHECK(linear.max_ratio >= 0.9 * top);
    CHECK(lipschitz_estimate([](const Vector& x) { return Vector(Vector::Zero(x.size())); }, gaussian, 100, 2).max_ratio == 0.0);
  }

  TEST_CASE("invertible skip map stays within the theoretical bounds") {
    // Identity-shaped skip: x -> lambda ReLU(x) + ReLU(W x + b) with
    // Lip(ReLU(W . + b)) < lambda.
    const double lambda = 0.3;
    const int dim = 8;
    std::mt19937_64 rng(56);
    LinearLayer net(dim, dim);
    net.init_uniform(rng);
    net.weight *= 5.0;
    net = spectral_rescale(net, 0.99 * lambda);
    // On the nonnegative orthant ReLU is the identity, so the skip term is the
    // identity map there and the forward and inverse bounds both apply.
    const VectorMap residual = [&](const Vector& x) {
      const Tensor2 row = x.transpose();
      return Vector((row + ReLU::apply(net.apply(row))).transpose());
    };
    const PairSampler orthant = [&](std::mt19937_64& r) {
      std::exponential_distribution<double> e(1.0);
      Vector x(dim), y(dim);
      for (int k = 0; k < dim; ++k) {
        x[k] = e(r);
        y[k] = e(r);
      }
      return std::make_pair(x, y);
    };
    const LipschitzEstimate est = lipschitz_estimate(residual, orthant, 100000, 3);
    CHECK(est.pairs == 100000);
    CHECK(est.max_ratio < 1.0 + lambda);
    CHECK(est.min_ratio > 1.0 - lambda);

    const VectorMap literal = [&](const Vector& x) {
      const Tensor2 row = x.transpose();
      return Vector((lambda * ReLU::apply(row) + ReLU::apply(net.apply(row))).transpose());
    };
    const PairSampler gaussian = [&](std::mt19937_64& r) {
      std::normal_distribution<double> normal;
      Vector x(dim), y(dim);
      for (int k = 0; k < dim; ++k) {
        x[k] = normal(r);
        y[k] = normal(r);
      }
      return std::make_pair(x, y);
    };
    CHECK(lipschitz_estimate(literal, gaussian, 100000, 4).max_ratio < 1.0 + lambda);
  }
}
