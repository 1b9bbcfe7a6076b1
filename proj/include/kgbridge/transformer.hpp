#pragma once

#include <vector>

#include "kgbridge/tensor.hpp"

namespace kgbridge {

// Tape ids for one attention head group: d x d projections with biases.
template <typename T>
struct AttentionIds {
  typename Tape<T>::Id wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct EncoderBlockIds {
  typename Tape<T>::Id ln1_gain, ln1_bias;
  AttentionIds<T> attn;
  typename Tape<T>::Id ln2_gain, ln2_bias;
  typename Tape<T>::Id ff_w1, ff_b1, ff_w2, ff_b2;  // d->4d->d
};

// Scaled dot-product attention over L tokens, heads concatenated and
// output-projected. x is L x d; d must be divisible by heads.
template <typename T>
typename Tape<T>::Id multi_head_attention(Tape<T>& tape,
                                          typename Tape<T>::Id x,
                                          const AttentionIds<T>& w, int heads) {
  const int d = tape.value(x).cols();
  if (heads < 1 || d % heads != 0)
    throw DataError("attention: embed dim not divisible by head count");
  const int dh = d / heads;

  const auto q = tape.add(tape.matmul(x, w.wq), w.bq);
  const auto k = tape.add(tape.matmul(x, w.wk), w.bk);
  const auto v = tape.add(tape.matmul(x, w.wv), w.bv);

  std::vector<typename Tape<T>::Id> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * dh, c1 = (h + 1) * dh;
    const auto qh = tape.slice_cols(q, c0, c1);
    const auto kh = tape.slice_cols(k, c0, c1);
    const auto vh = tape.slice_cols(v, c0, c1);
    const auto scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_scale);
    const auto attn = tape.softmax_rows(scores);
    head_outs.push_back(tape.matmul(attn, vh));
  }
  const auto concat = heads == 1 ? head_outs[0] : tape.concat_cols(head_outs);
  return tape.add(tape.matmul(concat, w.wo), w.bo);
}

// One pre-norm block: x + Attn(LN(x)), then x + FF(LN(x)) with a GELU
// hidden layer of width 4d. With zero wo/ff_w2 (and their biases) the
// block is exactly the identity.
template <typename T>
typename Tape<T>::Id transformer_block(Tape<T>& tape, typename Tape<T>::Id x,
                                       const EncoderBlockIds<T>& blk, int heads) {
  const auto normed1 = tape.layer_norm(x, blk.ln1_gain, blk.ln1_bias);
  const auto x1 = tape.add(x, multi_head_attention(tape, normed1, blk.attn, heads));
  const auto normed2 = tape.layer_norm(x1, blk.ln2_gain, blk.ln2_bias);
  const auto hidden = tape.gelu(tape.add(tape.matmul(normed2, blk.ff_w1), blk.ff_b1));
  const auto ff = tape.add(tape.matmul(hidden, blk.ff_w2), blk.ff_b2);
  return tape.add(x1, ff);
}

// Full-attention encoder stack; no positional encodings and no mask (slot
// semantics are handled by the caller).
template <typename T>
typename Tape<T>::Id transformer_encoder_forward(
    Tape<T>& tape, typename Tape<T>::Id z,
    const std::vector<EncoderBlockIds<T>>& layers, int heads) {
  auto x = z;
  for (const auto& blk : layers) x = transformer_block(tape, x, blk, heads);
  return x;
}

}  // namespace kgbridge
