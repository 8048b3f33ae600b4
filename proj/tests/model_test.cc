// Copyright 2026 The auxstep Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "auxstep/model.h"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "auxstep/error.h"
#include "auxstep/ops.h"
#include "auxstep/rng.h"

namespace auxstep {
namespace {

Tensor random_image(std::uint64_t seed, std::size_t h = 64, std::size_t w = 64) {
  Engine engine(seed);
  std::vector<double> v(3 * h * w);
  for (double& x : v) x = uniform01(engine);
  return Tensor({3, h, w}, std::move(v));
}

ModelConfig config_with_heads() {
  ModelConfig c;
  c.aux_heads = {{TaskKind::kSegmentation, "seg", 12},
                 {TaskKind::kMldc, "mldc", 12},
                 {TaskKind::kSlc, "slc", 12},
                 {TaskKind::kReconstruction, "rec", 0}};
  return c;
}

TEST(EncoderTest, ZeroImageGivesPositionalTable) {
  FrozenEncoder enc(EncoderConfig{});
  Tensor out = enc.encode(Tensor::zeros({3, 64, 64}));
  EXPECT_EQ(out.shape(), (Shape{64, 8, 8}));
  ASSERT_EQ(out.numel(), enc.positional().size());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    EXPECT_EQ(out.data()[i], enc.positional()[i]);
  }
}

TEST(EncoderTest, RepeatIsBitIdentical) {
  FrozenEncoder enc(EncoderConfig{});
  Tensor img = random_image(3);
  Tensor a = enc.encode(img);
  Tensor b = enc.encode(img);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  EXPECT_FALSE(a.requires_grad());
  EXPECT_EQ(FrozenEncoder(EncoderConfig{}).fingerprint(), enc.fingerprint());
}

TEST(EncoderTest, PatchLocality) {
  FrozenEncoder enc(EncoderConfig{});
  Tensor img = random_image(5);
  Tensor changed = img.detach();
  // Patch (row 2, col 5): pixels y in [16,24), x in [40,48).
  changed.mutable_data()[1 * 64 * 64 + 19 * 64 + 44] = 0.0;
  changed.mutable_data()[2 * 64 * 64 + 23 * 64 + 40] = 1.0;
  Tensor a = enc.encode(img);
  Tensor b = enc.encode(changed);
  for (std::size_t e = 0; e < 64; ++e) {
    for (std::size_t gy = 0; gy < 8; ++gy) {
      for (std::size_t gx = 0; gx < 8; ++gx) {
        const std::size_t i = e * 64 + gy * 8 + gx;
        if (gy == 2 && gx == 5) continue;
        EXPECT_EQ(a.data()[i], b.data()[i]);
      }
    }
  }
  bool any = false;
  for (std::size_t e = 0; e < 64; ++e) {
    any |= a.data()[e * 64 + 2 * 8 + 5] != b.data()[e * 64 + 2 * 8 + 5];
  }
  EXPECT_TRUE(any);
}

TEST(EncoderTest, IndivisibleSizeNamesMultiple) {
  EncoderConfig c;
  c.height = 60;
  try {
    FrozenEncoder enc(c);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("multiple of patch_size 8"),
              std::string::npos);
  }
  FrozenEncoder enc(EncoderConfig{});
  try {
    enc.encode(Tensor::zeros({3, 60, 64}));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("multiples of 8"), std::string::npos);
  }
}

TEST(EncoderTest, RejectsOutOfRangeAndWrongShape) {
  FrozenEncoder enc(EncoderConfig{});
  EXPECT_THROW(enc.encode(Tensor::full({3, 64, 64}, 1.5)), ValidationError);
  EXPECT_THROW(enc.encode(Tensor::zeros({1, 64, 64})), ShapeError);
  EXPECT_THROW(enc.encode(Tensor::zeros({3, 64, 128})), ShapeError);
}

TEST(ModelTest, DepthIsPositiveAndFullResolution) {
  Model m = Model::init(ModelConfig{}, 1);
  EXPECT_TRUE(m.aux_heads().empty());
  for (std::uint64_t s : {1, 2, 3}) {
    Tensor d = m.predict(random_image(s), "depth");
    ASSERT_EQ(d.shape(), (Shape{1, 64, 64}));
    for (double v : d.data()) EXPECT_GT(v, 0.0);
  }
}

TEST(ModelTest, HeadShapes) {
  Model m = Model::init(config_with_heads(), 1);
  Tensor img = random_image(9);
  EXPECT_EQ(m.predict(img, "seg").shape(), (Shape{12, 64, 64}));
  EXPECT_EQ(m.predict(img, "aux.mldc").shape(), (Shape{12, 64, 64}));
  EXPECT_EQ(m.predict(img, "slc").shape(), (Shape{12, 64, 64}));
  EXPECT_EQ(m.predict(img, "rec").shape(), (Shape{3, 64, 64}));
  EXPECT_THROW(m.predict(img, "nope"), ValidationError);
  EXPECT_THROW(m.head("aux"), ValidationError);  // ambiguous with four heads
}

TEST(ModelTest, SingleAuxHeadAlias) {
  ModelConfig c;
  c.aux_heads = {{TaskKind::kMldc, "synth", 12}};
  Model m = Model::init(c, 1);
  EXPECT_EQ(&m.head("aux"), &m.head("aux.synth"));
  EXPECT_EQ(m.head("aux").name(), "head.aux.synth");
}

TEST(ModelTest, InitDeterministicPerSeed) {
  Model a = Model::init(config_with_heads(), 7);
  Model b = Model::init(config_with_heads(), 7);
  Model c = Model::init(config_with_heads(), 8);
  auto pa = a.named_parameters();
  auto pb = b.named_parameters();
  auto pc = c.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(),
                           pb[i].tensor.data().begin()));
    if (pa[i].tensor.rank() == 2) {
      differs |= !std::equal(pa[i].tensor.data().begin(),
                             pa[i].tensor.data().end(),
                             pc[i].tensor.data().begin());
    } else {
      for (double v : pa[i].tensor.data()) EXPECT_EQ(v, 0.0);
    }
    EXPECT_TRUE(pa[i].tensor.requires_grad());
  }
  EXPECT_TRUE(differs);
}

TEST(ModelTest, WeightBoundFollowsFanIn) {
  ModelConfig c;
  c.encoder.embed_dim = 16;
  Model m = Model::init(c, 3);
  Tensor w = m.decoder_parameters()[0].tensor;
  ASSERT_EQ(w.shape(), (Shape{48, 16}));
  double max_abs = 0.0;
  for (double v : w.data()) max_abs = std::max(max_abs, std::abs(v));
  EXPECT_LE(max_abs, 0.25);
  EXPECT_GT(max_abs, 0.2);  // 768 draws fill the interval
}

TEST(ModelTest, AuxHeadsDoNotChangeSharedInit) {
  Model base = Model::init(ModelConfig{}, 11);
  Model joint = Model::init(config_with_heads(), 11);
  auto pb = base.named_parameters();
  auto pj = joint.named_parameters();
  for (std::size_t i = 0; i < pb.size(); ++i) {
    EXPECT_EQ(pb[i].name, pj[i].name);
    EXPECT_TRUE(std::equal(pb[i].tensor.data().begin(), pb[i].tensor.data().end(),
                           pj[i].tensor.data().begin()));
  }
}

TEST(ModelTest, DecoderIsSharedNotCopied) {
  Model m = Model::init(config_with_heads(), 1);
  auto dec = m.decoder_parameters();
  auto all = m.named_parameters();
  for (std::size_t i = 0; i < dec.size(); ++i) {
    EXPECT_TRUE(dec[i].tensor.same_as(all[i].tensor));
  }
  // Every path reaches the same decoder tensors: a gradient through any head
  // lands on the decoder weights.
  std::set<std::string> names;
  for (const auto& p : all) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  for (const auto& p : all) EXPECT_EQ(p.name.find("encoder"), std::string::npos);
}

TEST(ModelTest, HeadsAreSmallRelativeToDecoder) {
  Model m = Model::init(config_with_heads(), 1);
  std::size_t dec = 0;
  for (const auto& p : m.decoder_parameters()) dec += p.tensor.numel();
  for (const TaskHead& h : m.aux_heads()) {
    std::size_t n = 0;
    for (const auto& p : h.parameters()) n += p.tensor.numel();
    EXPECT_LT(n * 5, dec);
  }
}

TEST(ModelTest, RejectsBadConfigs) {
  ModelConfig c;
  c.decoder_channels = {48, 32};
  EXPECT_THROW(Model::init(c, 1), ValidationError);
  ModelConfig dup;
  dup.aux_heads = {{TaskKind::kMldc, "a", 12}, {TaskKind::kSlc, "a", 12}};
  EXPECT_THROW(Model::init(dup, 1), ValidationError);
  EXPECT_THROW(parse_task_kind("depthx"), ValidationError);
  EXPECT_EQ(parse_task_kind("mldc"), TaskKind::kMldc);
}

TEST(ModelTest, LoadParametersRoundTrip) {
  Model a = Model::init(config_with_heads(), 1);
  Model b = Model::init(config_with_heads(), 2);
  b.load_parameters(a.named_parameters());
  Tensor img = random_image(4);
  Tensor da = a.predict(img, "depth");
  Tensor db = b.predict(img, "depth");
  EXPECT_TRUE(std::equal(da.data().begin(), da.data().end(), db.data().begin()));
  auto partial = a.named_parameters();
  partial.pop_back();
  EXPECT_THROW(b.load_parameters(partial), FormatError);
}

// Heads applied on the patch grid must match the naive composition at full
// resolution: values bit for bit, gradients up to summation order.
TEST(ModelTest, GridHeadsMatchFullResolutionComposition) {
  Model m = Model::init(config_with_heads(), 3);
  const Tensor features = m.encoder().encode(random_image(5));
  for (const char* sel : {"depth", "seg", "mldc", "rec"}) {
    const TaskHead& h = m.head(sel);
    Tensor fast;
    Tensor slow;
    std::vector<std::vector<double>> grads[2];
    for (int pass = 0; pass < 2; ++pass) {
      for (NamedParameter& p : m.named_parameters()) p.tensor.zero_grad();
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        Tensor out = pass == 0 ? m.forward_features(features, h)
                               : h.forward(m.decoder().forward(features));
        (pass == 0 ? fast : slow) = out;
        loss = ops::sum(ops::mul(out, out));
      }
      tape.backward(loss);
      for (NamedParameter& p : m.named_parameters()) {
        grads[pass].emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
      }
    }
    ASSERT_EQ(fast.shape(), slow.shape());
    EXPECT_TRUE(std::equal(fast.data().begin(), fast.data().end(), slow.data().begin()))
        << sel;
    for (std::size_t i = 0; i < grads[0].size(); ++i) {
      ASSERT_EQ(grads[0][i].size(), grads[1][i].size());
      for (std::size_t j = 0; j < grads[0][i].size(); ++j) {
        EXPECT_NEAR(grads[0][i][j], grads[1][i][j],
                    1e-10 * std::max(1.0, std::abs(grads[1][i][j])))
            << sel;
      }
    }
  }
}

}  // namespace
}  // namespace auxstep
