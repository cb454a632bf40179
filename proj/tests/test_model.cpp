#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "suparc/data.hpp"
#include "suparc/errors.hpp"
#include "suparc/gradcheck.hpp"
#include "suparc/model.hpp"
#include "suparc/rng.hpp"
#include "suparc/tensor.hpp"

using namespace suparc;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig config;
  config.text_vocab = 11;
  config.text_embed_dim = 3;
  config.visual_in = 3;
  config.audio_in = 2;
  config.hidden = 2;
  config.rep_dim = 4;
  return config;
}

ModalityFeatures sequence(Modality modality, std::size_t length, std::size_t width,
                          std::vector<double> values) {
  return {modality, length, width, std::move(values)};
}

ModalityFeatures random_sequence(Rng& rng, Modality modality, std::size_t length,
                                 std::size_t width) {
  std::vector<double> values(length * width);
  for (auto& v : values) v = rng.normal();
  return {modality, length, width, std::move(values)};
}

// Central differences of a parameter tensor, perturbing the live model.
std::vector<double> fd_wrt(const std::function<double()>& f, Tensor param,
                           double step = 1e-5) {
  std::vector<double> gradient(param.numel());
  auto values = param.values_mut();
  for (std::size_t i = 0; i < gradient.size(); ++i) {
    const double original = values[i];
    values[i] = original + step;
    const double plus = f();
    values[i] = original - step;
    const double minus = f();
    values[i] = original;
    gradient[i] = (plus - minus) / (2.0 * step);
  }
  return gradient;
}

void zero_tensor(Tensor t) {
  std::fill(t.values_mut().begin(), t.values_mut().end(), 0.0);
}

}  // namespace

TEST_CASE("initialization is deterministic in the seed") {
  const EncoderConfig config = tiny_config();
  const FusionModel a = init_params(config, 42);
  const FusionModel b = init_params(config, 42);
  const FusionModel c = init_params(config, 43);

  const auto pa = a.parameters();
  const auto pb = b.parameters();
  const auto pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_difference = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(std::equal(pa[i].second.values().begin(), pa[i].second.values().end(),
                     pb[i].second.values().begin()));
    any_difference = any_difference ||
                     !std::equal(pa[i].second.values().begin(), pa[i].second.values().end(),
                                 pc[i].second.values().begin());
  }
  CHECK(any_difference);
}

TEST_CASE("biases start at zero except the forget gate") {
  const FusionModel model = init_params(tiny_config(), 5);
  const std::size_t hidden = model.config.hidden;
  for (const auto& [name, tensor] : model.parameters()) {
    if (name.find(".b_ih") != std::string::npos) {
      for (std::size_t i = 0; i < tensor.numel(); ++i) {
        const bool forget = i >= hidden && i < 2 * hidden;
        CHECK(tensor.values()[i] == (forget ? 1.0 : 0.0));
      }
    } else if (name.find("bias") != std::string::npos ||
               name.find(".b_hh") != std::string::npos) {
      for (double v : tensor.values()) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("encode_text pools by mean and rejects out-of-vocabulary ids") {
  const FusionModel model = init_params(tiny_config(), 1);

  const std::vector<int> one = {4};
  const std::vector<int> two = {4, 4};
  Tensor h1 = encode_text(model, std::span<const int>(one));
  Tensor h2 = encode_text(model, std::span<const int>(two));
  CHECK(h1.numel() == model.config.rep_dim);
  CHECK(std::equal(h1.values().begin(), h1.values().end(), h2.values().begin()));

  const std::vector<int> mixed = {1, 5, 9};
  const std::vector<int> permuted = {9, 1, 5};
  Tensor hm = encode_text(model, std::span<const int>(mixed));
  Tensor hp = encode_text(model, std::span<const int>(permuted));
  for (std::size_t i = 0; i < hm.numel(); ++i) {
    CHECK(hm.values()[i] == doctest::Approx(hp.values()[i]).epsilon(1e-12));
  }

  const std::vector<int> oov = {11};
  CHECK_THROWS_AS(encode_text(model, std::span<const int>(oov)), DataError);
  CHECK_THROWS_AS(encode_text(model, std::span<const int>()), DataError);
}

TEST_CASE("encode_text accepts a precomputed vector of the embedding width") {
  const FusionModel model = init_params(tiny_config(), 1);
  const std::vector<double> vec = {0.1, -0.2, 0.3};
  CHECK(encode_text(model, std::span<const double>(vec)).numel() == model.config.rep_dim);
  const std::vector<double> bad = {0.1, -0.2};
  CHECK_THROWS_AS(encode_text(model, std::span<const double>(bad)), DataError);
}

TEST_CASE("encode_recurrent basics") {
  const FusionModel model = init_params(tiny_config(), 2);
  Rng rng(9);

  Tensor single = encode_recurrent(model, random_sequence(rng, Modality::visual, 1, 3));
  CHECK(single.numel() == model.config.rep_dim);

  CHECK_THROWS_AS(encode_recurrent(model, random_sequence(rng, Modality::visual, 2, 5)),
                  DataError);
  CHECK_THROWS_AS(encode_recurrent(model, sequence(Modality::audio, 0, 2, {})), DataError);
  CHECK_THROWS_AS(encode_recurrent(model, random_sequence(rng, Modality::text, 2, 3)),
                  ContractError);
}

TEST_CASE("zero input with zeroed biases yields the projection bias") {
  FusionModel model = init_params(tiny_config(), 3);
  for (LstmCell* cell : {&model.visual.fwd, &model.visual.bwd}) {
    zero_tensor(cell->b_ih);
    zero_tensor(cell->b_hh);
  }
  Tensor out = encode_recurrent(model, sequence(Modality::visual, 4, 3,
                                                std::vector<double>(12, 0.0)));
  const auto bias = model.visual.projection.bias.values();
  REQUIRE(out.numel() == bias.size());
  for (std::size_t i = 0; i < bias.size(); ++i) CHECK(out.values()[i] == bias[i]);
}

TEST_CASE("encode_recurrent is order-sensitive") {
  const FusionModel model = init_params(tiny_config(), 4);
  Rng rng(10);
  ModalityFeatures forward = random_sequence(rng, Modality::audio, 5, 2);
  ModalityFeatures reversed = forward;
  for (std::size_t r = 0; r < forward.length; ++r) {
    for (std::size_t c = 0; c < forward.width; ++c) {
      reversed.values[r * forward.width + c] =
          forward.values[(forward.length - 1 - r) * forward.width + c];
    }
  }
  Tensor a = encode_recurrent(model, forward);
  Tensor b = encode_recurrent(model, reversed);
  double difference = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    difference = std::max(difference, std::fabs(a.values()[i] - b.values()[i]));
  }
  CHECK(difference > 1e-9);
}

TEST_CASE("recurrent gradients match central differences at 1e-4") {
  FusionModel model = init_params(tiny_config(), 6);
  Rng rng(11);
  const ModalityFeatures features = random_sequence(rng, Modality::visual, 3, 3);

  const auto forward_value = [&model, &features] {
    return sum(encode_recurrent(model, features)).item();
  };

  for (Tensor param : {model.visual.fwd.w_ih, model.visual.fwd.w_hh, model.visual.fwd.b_ih,
                       model.visual.bwd.w_hh, model.visual.projection.weight}) {
    model.zero_grad();
    {
      Tape tape;
      TapeScope scope(tape);
      backward(sum(encode_recurrent(model, features)));
    }
    const std::vector<double> analytic(param.grad().begin(), param.grad().end());
    const std::vector<double> numeric = fd_wrt(forward_value, param);
    CHECK(max_rel_error(analytic, numeric) <= 1e-4);
  }
}

TEST_CASE("fuse contracts and gradients") {
  FusionModel model = init_params(tiny_config(), 7);
  Rng rng(12);
  const std::size_t rep = model.config.rep_dim;

  Tensor x0 = Tensor::zeros({3 * rep});
  for (auto& v : x0.values_mut()) v = rng.normal();

  const auto build = [&model, rep](const Tensor& x) {
    return sum(fuse(model, slice(x, 0, rep), slice(x, rep, rep), slice(x, 2 * rep, rep)));
  };
  Tensor x = Tensor::parameter(x0.shape(), {x0.values().begin(), x0.values().end()});
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    backward(build(x));
    analytic.assign(x.grad().begin(), x.grad().end());
  }
  const auto numeric = finite_difference_gradient(
      [&build](const Tensor& t) { return build(t).item(); }, x0);
  CHECK(max_rel_error(analytic, numeric) <= 1e-4);

  CHECK(fuse(model, Tensor::zeros({rep}), Tensor::zeros({rep}), Tensor::zeros({rep})).numel() ==
        rep);
  CHECK_THROWS_AS(fuse(model, Tensor::zeros({rep + 1}), Tensor::zeros({rep}),
                       Tensor::zeros({rep})),
                  ContractError);
}

TEST_CASE("fusing permuted inputs through permuted weight blocks matches") {
  FusionModel model = init_params(tiny_config(), 8);
  const std::size_t rep = model.config.rep_dim;
  Rng rng(13);
  std::vector<double> t_vals(rep), v_vals(rep), a_vals(rep);
  for (auto& v : t_vals) v = rng.normal();
  for (auto& v : v_vals) v = rng.normal();
  for (auto& v : a_vals) v = rng.normal();
  Tensor ht = Tensor::vector(t_vals);
  Tensor hv = Tensor::vector(v_vals);
  Tensor ha = Tensor::vector(a_vals);

  // Rotate the layer0 column blocks (t,v,a) -> (v,a,t) and rotate the inputs
  // the same way; the fusion output must be unchanged.
  FusionModel rotated = model.clone();
  const std::size_t rows = rotated.fusion.layer0.weight.shape()[0];
  auto src = model.fusion.layer0.weight.values();
  auto dst = rotated.fusion.layer0.weight.values_mut();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < rep; ++c) {
      dst[r * 3 * rep + c] = src[r * 3 * rep + rep + c];              // v block first
      dst[r * 3 * rep + rep + c] = src[r * 3 * rep + 2 * rep + c];    // then a
      dst[r * 3 * rep + 2 * rep + c] = src[r * 3 * rep + c];          // then t
    }
  }
  Tensor base = fuse(model, ht, hv, ha);
  Tensor shuffled = fuse(rotated, hv, ha, ht);
  for (std::size_t i = 0; i < base.numel(); ++i) {
    CHECK(base.values()[i] == doctest::Approx(shuffled.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("masked fusion semantics") {
  FusionModel model = init_params(tiny_config(), 9);
  const std::size_t rep = model.config.rep_dim;
  Rng rng(14);
  std::vector<double> tv(rep), vv(rep), av(rep);
  for (auto& v : tv) v = rng.normal();
  for (auto& v : vv) v = rng.normal();
  for (auto& v : av) v = rng.normal();
  Tensor ht = Tensor::vector(tv);
  Tensor hv = Tensor::vector(vv);
  Tensor ha = Tensor::vector(av);

  // Empty mask is exactly fuse.
  Tensor plain = fuse(model, ht, hv, ha);
  Tensor unmasked = masked_fuse(model, ht, hv, ha, {});
  CHECK(std::equal(plain.values().begin(), plain.values().end(), unmasked.values().begin()));

  // Masking {v, a} equals fusing explicit zeros.
  Tensor masked = masked_fuse(model, ht, hv, ha, {false, true, true});
  Tensor zeros = fuse(model, ht, Tensor::zeros({rep}), Tensor::zeros({rep}));
  CHECK(std::equal(masked.values().begin(), masked.values().end(), zeros.values().begin()));

  CHECK_THROWS_AS(masked_fuse(model, ht, hv, ha, {true, true, true}), ContractError);

  // Finite differences see zero sensitivity to a masked input.
  const auto numeric = finite_difference_gradient(
      [&](const Tensor& probe) {
        return sum(masked_fuse(model, ht, probe, ha, {false, true, false})).item();
      },
      hv);
  for (double g : numeric) CHECK(g == 0.0);
}

TEST_CASE("predict stays strictly inside (-3, 3)") {
  FusionModel model = init_params(tiny_config(), 15);
  const std::size_t rep = model.config.rep_dim;

  // Zeroed predictor gives exactly zero.
  FusionModel zeroed = model.clone();
  zero_tensor(zeroed.predictor.layer0.weight);
  zero_tensor(zeroed.predictor.layer0.bias);
  zero_tensor(zeroed.predictor.layer1.weight);
  zero_tensor(zeroed.predictor.layer1.bias);
  CHECK(predict(zeroed, Tensor::full({rep}, 2.0)).item() == 0.0);

  // Saturating weights still keep the output strictly inside the interval.
  FusionModel saturated = model.clone();
  std::fill(saturated.predictor.layer1.weight.values_mut().begin(),
            saturated.predictor.layer1.weight.values_mut().end(), 1e6);
  Rng rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> h(rep);
    for (auto& v : h) v = rng.uniform(-100.0, 100.0);
    const double y_sat = predict(saturated, Tensor::vector(h)).item();
    const double y_plain = predict(model, Tensor::vector(h)).item();
    CHECK(std::fabs(y_sat) < 3.0);
    CHECK(std::fabs(y_plain) < 3.0);
  }

  // Gradient through the predictor.
  const auto build = [&model](const Tensor& x) { return predict(model, x); };
  Tensor x0 = Tensor::full({rep}, 0.3);
  Tensor x = Tensor::parameter(x0.shape(), {x0.values().begin(), x0.values().end()});
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    backward(build(x));
    analytic.assign(x.grad().begin(), x.grad().end());
  }
  const auto numeric = finite_difference_gradient(
      [&build](const Tensor& t) { return build(t).item(); }, x0);
  CHECK(max_rel_error(analytic, numeric) <= 1e-4);
}

TEST_CASE("forward passes are deterministic") {
  const FusionModel model = init_params(tiny_config(), 17);
  Rng rng(18);
  const ModalityFeatures visual = random_sequence(rng, Modality::visual, 4, 3);
  const ModalityFeatures audio = random_sequence(rng, Modality::audio, 6, 2);
  const std::vector<int> tokens = {1, 2, 3};

  const auto run = [&] {
    Tensor ht = encode_text(model, std::span<const int>(tokens));
    Tensor hv = encode_recurrent(model, visual);
    Tensor ha = encode_recurrent(model, audio);
    return predict(model, fuse(model, ht, hv, ha)).item();
  };
  CHECK(run() == run());
}

TEST_CASE("encode_utterance handles both text representations") {
  const FusionModel model = init_params(tiny_config(), 20);
  Rng rng(22);

  Utterance utterance;
  utterance.id = "u";
  utterance.y = 0.5;
  utterance.visual = random_sequence(rng, Modality::visual, 3, 3);
  utterance.audio = random_sequence(rng, Modality::audio, 2, 2);

  utterance.tokens = {1, 2};
  const Representations from_tokens = encode_utterance(model, utterance);
  CHECK(from_tokens.text.numel() == model.config.rep_dim);
  CHECK(from_tokens.visual.numel() == model.config.rep_dim);

  utterance.tokens.clear();
  utterance.text_vector = {0.1, 0.2, -0.3};  // width text_embed_dim
  const Representations from_vector = encode_utterance(model, utterance);
  CHECK(from_vector.text.numel() == model.config.rep_dim);

  utterance.text_vector.clear();
  CHECK_THROWS_AS(encode_utterance(model, utterance), DataError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const FusionModel model = init_params(tiny_config(), 19);
  const std::string path = "/tmp/suparc_test_checkpoint.json";
  save_checkpoint(model, path);
  const FusionModel loaded = load_checkpoint(path);

  CHECK(loaded.config.text_vocab == model.config.text_vocab);
  CHECK(loaded.config.rep_dim == model.config.rep_dim);
  const auto pa = model.parameters();
  const auto pb = loaded.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].second.shape() == pb[i].second.shape());
    CHECK(std::equal(pa[i].second.values().begin(), pa[i].second.values().end(),
                     pb[i].second.values().begin()));
  }

  CHECK_THROWS_AS(load_checkpoint("/tmp/suparc_no_such_checkpoint.json"), DataError);
}
