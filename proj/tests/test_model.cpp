#include <doctest.h>

#include <cmath>

#include "mscib/error.hpp"
#include "mscib/model.hpp"

using namespace mscib;

namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.view_dims = {4, 6};
  d.n_samples = 10;
  d.latent_dim = 3;
  d.consistent_dim = 5;
  d.n_clusters = 3;
  d.hidden = {8};
  d.head_hidden = {7};
  return d;
}

Matrix random_input(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  return rng.normal_matrix(rows, cols);
}

}  // namespace

TEST_CASE("init_model is deterministic and has the documented structure") {
  const auto a = init_model(tiny_dims(), 5);
  const auto b = init_model(tiny_dims(), 5);
  CHECK(a == b);
  CHECK_FALSE(a == init_model(tiny_dims(), 6));
  CHECK(a.n_views() == 2);
  CHECK(a.views[1].decoder.out_dim() == 6);
  CHECK(a.views[0].semantic_head.out_dim() == 3);
  CHECK(a.fusion.in_dim() == 3);
  CHECK(a.fusion.out_dim() == 5);
  CHECK(a.consistent_head.in_dim() == 5);
  CHECK(a.n_clusters() == 3);
  CHECK(a.z.rows() == 10);
  CHECK(a.z.cols() == 5);
  // 4 nets per view plus fusion and consistent head (2 tensors per layer) plus Z.
  auto copy = a;
  CHECK(copy.tensors().back().name == "z");
}

TEST_CASE("Z shape for a realistic dataset") {
  ModelDims d;
  d.view_dims = {784, 256};
  d.n_samples = 1400;
  d.n_clusters = 10;
  const auto model = init_model(d, 0);
  CHECK(model.z.rows() == 1400);
  CHECK(model.z.cols() == 64);
  CHECK(model.z.cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("init_model rejects degenerate dims") {
  auto d = tiny_dims();
  d.n_clusters = 0;
  CHECK_THROWS_AS(init_model(d, 0), InvalidArgument);
  d = tiny_dims();
  d.latent_dim = 0;
  CHECK_THROWS_AS(init_model(d, 0), InvalidArgument);
}

TEST_CASE("encode_view") {
  auto model = init_model(tiny_dims(), 1);
  const Matrix x = random_input(5, 4, 2);

  SUBCASE("deterministic mode returns the mean") {
    const auto enc = encode_view(model, 0, x, nullptr);
    CHECK(enc.z == enc.mu);
    CHECK(enc.epsilon.isZero());
    CHECK(view_embedding(model, 0, x) == enc.mu);
  }
  SUBCASE("reparameterisation holds exactly for the stored draw") {
    Rng rng(3);
    const auto enc = encode_view(model, 0, x, &rng);
    const Matrix expect = enc.mu.array() + enc.sigma.array() * enc.epsilon.array();
    CHECK(enc.z == expect);
    CHECK(enc.sigma.minCoeff() > 0.0);
  }
  SUBCASE("zero log-variance gives unit sigma") {
    for (auto& l : model.views[0].encoder.logvar_net.layers()) {
      l.weight.setZero();
      l.bias.setZero();
    }
    CHECK(encode_view(model, 0, x, nullptr).sigma == Matrix::Ones(5, 3));
  }
  SUBCASE("sigma stays inside the clamp window") {
    auto& last = model.views[0].encoder.logvar_net.layers().back();
    last.bias.setConstant(1e3);
    CHECK(encode_view(model, 0, x, nullptr).sigma.maxCoeff() == std::exp(5.0));
    last.bias.setConstant(-1e3);
    CHECK(encode_view(model, 0, x, nullptr).sigma.minCoeff() == std::exp(-5.0));
  }
  SUBCASE("fixed seed reproduces the sample") {
    Rng r1(11), r2(11);
    CHECK(encode_view(model, 1, random_input(5, 6, 4), &r1).z ==
          encode_view(model, 1, random_input(5, 6, 4), &r2).z);
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(encode_view(model, 0, random_input(5, 6, 1), nullptr), InvalidArgument);
    CHECK_THROWS_AS(encode_view(model, 2, x, nullptr), InvalidArgument);
  }
}

TEST_CASE("decode_view") {
  auto model = init_model(tiny_dims(), 1);
  const Matrix z = random_input(4, 3, 9);
  CHECK(decode_view(model, 1, z) == decode_view(model, 1, z));
  CHECK(decode_view(model, 1, z).cols() == 6);
  const Matrix empty = decode_view(model, 0, Matrix(0, 3));
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 4);
  CHECK_THROWS_AS(decode_view(model, 0, random_input(4, 2, 1)), InvalidArgument);

  // A single identity layer passes the code straight through.
  model.views[0].decoder = Mlp({Layer{Matrix::Identity(3, 3), Matrix::Zero(1, 3), Activation::kIdentity}});
  CHECK(decode_view(model, 0, z) == z);
}

TEST_CASE("semantic labels are row-stochastic") {
  auto model = init_model(tiny_dims(), 7);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix q = semantic_labels(model, Head::view(s % 2), 30.0 * random_input(6, 3, s));
    CHECK(q.minCoeff() >= 0.0);
    CHECK(q.maxCoeff() <= 1.0);
    for (Eigen::Index i = 0; i < q.rows(); ++i) CHECK(std::abs(q.row(i).sum() - 1.0) <= 1e-12);
    const Matrix qc = semantic_labels(model, Head::consistent(), random_input(6, 5, s));
    for (Eigen::Index i = 0; i < qc.rows(); ++i) CHECK(std::abs(qc.row(i).sum() - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(semantic_labels(model, Head::consistent(), random_input(2, 3, 0)), InvalidArgument);

  for (auto& l : model.consistent_head.layers()) l.weight.setZero();
  const Matrix uniform = semantic_labels(model, Head::consistent(), random_input(3, 5, 1));
  CHECK((uniform.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("softmax is invariant to a constant logit shift") {
  Matrix logits(2, 2);
  logits << 0.3, -1.2, 4.0, 2.5;
  const Matrix shifted = (logits.array() + 7.5).matrix();
  CHECK((softmax_rows(logits) - softmax_rows(shifted)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fuse_predict") {
  auto model = init_model(tiny_dims(), 2);
  const Matrix z = random_input(4, 3, 5);
  CHECK(fuse_predict(model, z, 0.0, nullptr) == model.fusion.forward(z));
  Rng r0(1);
  CHECK(fuse_predict(model, z, 0.0, &r0) == model.fusion.forward(z));
  Rng r1(8), r2(8);
  const Matrix a = fuse_predict(model, z, 0.1, &r1);
  CHECK(a == fuse_predict(model, z, 0.1, &r2));
  CHECK_FALSE(a == model.fusion.forward(z));

  ModelDims d = tiny_dims();
  d.consistent_dim = 3;
  auto square = init_model(d, 0);
  square.fusion = Mlp({Layer{Matrix::Identity(3, 3), Matrix::Zero(1, 3), Activation::kIdentity}});
  CHECK(fuse_predict(square, z, 0.0, nullptr) == z);
}

TEST_CASE("model archive round trip") {
  const auto model = init_model(tiny_dims(), 4);
  Archive a;
  model.write(a);
  const auto back = MscibModel::read(Archive::deserialize(a.serialize()));
  CHECK(back == model);
  Archive broken = a;
  broken.tensors.erase("model.z");
  CHECK_THROWS_AS(MscibModel::read(broken), FormatError);
}
