#include <gtest/gtest.h>

#include <sstream>

#include "xlfnd/checkpoint.hpp"

namespace {

using namespace xlfnd;

model::HyperConfig small_hyper() {
  model::HyperConfig h;
  h.embed_dim = 4;
  h.kernel_sizes = {1, 2};
  h.kernels_per_size = 3;
  h.article_dim = 5;
  h.source_dim = 4;
  h.hidden_units = 6;
  return h;
}

template <typename T>
checkpoint::Checkpoint<T> sample(std::uint64_t seed) {
  checkpoint::Checkpoint<T> ck;
  ck.hyper = small_hyper();
  ck.params = model::init_params<T>(ck.hyper, seed);
  ck.seed = seed;
  ck.epoch = 7;
  ck.config = {{"note", "x"}};
  return ck;
}

template <typename T>
std::string bytes(const checkpoint::Checkpoint<T>& ck) {
  std::ostringstream out;
  checkpoint::save(out, ck);
  return out.str();
}

TEST(Checkpoint, BitExactRoundTrip) {
  auto ck = sample<float>(3);
  std::istringstream in(bytes(ck));
  auto back = checkpoint::load<float>(in);
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.seed, 3u);
  EXPECT_EQ(back.epoch, 7);
  EXPECT_EQ(nlohmann::json(back.hyper), nlohmann::json(ck.hyper));
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(bytes(back), bytes(ck));
}

TEST(Checkpoint, DoubleRoundTrip) {
  auto ck = sample<double>(4);
  std::istringstream in(bytes(ck));
  EXPECT_EQ(checkpoint::load<double>(in).params, ck.params);
}

TEST(Checkpoint, DtypeMismatch) {
  std::istringstream in(bytes(sample<float>(1)));
  EXPECT_THROW(checkpoint::load<double>(in), ContractError);
}

TEST(Checkpoint, TrailingBytes) {
  std::istringstream in(bytes(sample<float>(1)) + "x");
  EXPECT_THROW(checkpoint::load<float>(in), IoError);
}

TEST(Checkpoint, BadMagic) {
  auto b = bytes(sample<float>(1));
  b[0] = 'Y';
  std::istringstream in(b);
  EXPECT_THROW(checkpoint::load<float>(in), IoError);
}

TEST(Checkpoint, Truncated) {
  auto b = bytes(sample<float>(1));
  std::istringstream in(b.substr(0, b.size() - 3));
  EXPECT_THROW(checkpoint::load<float>(in), IoError);
  std::istringstream header(b.substr(0, 12));
  EXPECT_THROW(checkpoint::load<float>(header), IoError);
}

TEST(Checkpoint, MissingFile) {
  EXPECT_THROW(checkpoint::load<float>("/nonexistent/x.ckpt"), IoError);
}

}  // namespace
