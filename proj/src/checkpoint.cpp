#include "spa/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "spa/error.hpp"
#include "spa/text.hpp"

namespace spa {

namespace {

constexpr std::string_view kMagic = "spa-checkpoint";
constexpr const char* kBlockNames[] = {"feature", "classifier", "discriminator"};

void append_values(std::string& out, std::string_view tag, std::span<const double> values) {
  out += tag;
  for (double v : values) {
    out += ' ';
    out += format_double(v);
  }
  out += '\n';
}

void append_widths(std::string& out, std::string_view tag, const std::vector<std::size_t>& widths) {
  out += tag;
  for (std::size_t w : widths) {
    out += ' ';
    out += std::to_string(w);
  }
  out += '\n';
}

// Whitespace-separated tokens of one line at a time, with line numbers for errors.
class LineReader {
 public:
  LineReader(std::string_view text, std::string origin) : text_(text), origin_(std::move(origin)) {}

  std::vector<std::string_view> next(std::string_view expected_tag) {
    while (pos_ < text_.size()) {
      const std::size_t end = std::min(text_.find('\n', pos_), text_.size());
      const std::string_view line = trim(text_.substr(pos_, end - pos_));
      pos_ = end + 1;
      ++line_;
      if (line.empty()) continue;
      std::vector<std::string_view> tokens;
      for (std::string_view tok : split_fields(line, ' ')) {
        if (!tok.empty()) tokens.push_back(tok);
      }
      if (tokens.front() != expected_tag) {
        throw fail("expected '" + std::string(expected_tag) + "', found '" +
                   std::string(tokens.front()) + "'");
      }
      tokens.erase(tokens.begin());
      return tokens;
    }
    throw fail("unexpected end of file, expected '" + std::string(expected_tag) + "'");
  }

  std::size_t to_size(std::string_view tok) const {
    const auto v = parse_int(tok);
    if (!v || *v < 0) throw fail("expected a non-negative integer, found '" + std::string(tok) + "'");
    return static_cast<std::size_t>(*v);
  }

  double to_double(std::string_view tok) const {
    const auto v = parse_double(tok);
    if (!v) throw fail("expected a finite number, found '" + std::string(tok) + "'");
    return *v;
  }

  std::vector<std::size_t> sizes(const std::vector<std::string_view>& toks) const {
    std::vector<std::size_t> out;
    for (auto t : toks) out.push_back(to_size(t));
    return out;
  }

  std::vector<double> values(const std::vector<std::string_view>& toks, std::size_t expected) const {
    if (toks.size() != expected) {
      throw fail("expected " + std::to_string(expected) + " values, found " + std::to_string(toks.size()));
    }
    std::vector<double> out;
    out.reserve(toks.size());
    for (auto t : toks) out.push_back(to_double(t));
    return out;
  }

  Error fail(const std::string& why) const {
    return Error(ErrorKind::parse, origin_ + ":" + std::to_string(line_) + ": " + why);
  }

 private:
  std::string_view text_;
  std::string origin_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

Mlp read_block(LineReader& in, std::string_view name) {
  const auto head = in.next("block");
  if (head.size() != 2 || head[0] != name) {
    throw in.fail("expected 'block " + std::string(name) + " <layers>'");
  }
  Mlp mlp;
  const std::size_t count = in.to_size(head[1]);
  if (count == 0) throw in.fail("block " + std::string(name) + " has no layers");
  for (std::size_t l = 0; l < count; ++l) {
    const auto shape = in.sizes(in.next("layer"));
    if (shape.size() != 2 || shape[0] == 0 || shape[1] == 0) throw in.fail("layer shape must be 'out in'");
    const std::size_t out_dim = shape[0];
    const std::size_t in_dim = shape[1];
    std::vector<double> w;
    w.reserve(out_dim * in_dim);
    for (std::size_t r = 0; r < out_dim; ++r) {
      const auto row = in.values(in.next("w"), in_dim);
      w.insert(w.end(), row.begin(), row.end());
    }
    LayerParams layer{Matrix(out_dim, in_dim, std::move(w)), in.values(in.next("b"), out_dim)};
    if (!mlp.layers.empty() && mlp.layers.back().weights.rows() != in_dim) {
      throw Error(ErrorKind::dimension, "block " + std::string(name) + " layer " + std::to_string(l) +
                                            " input width does not match the previous layer");
    }
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

}  // namespace

std::string checkpoint_text(const Checkpoint& ckpt) {
  const Network& net = ckpt.network;
  std::string out;
  out += std::string(kMagic) + ' ' + std::to_string(kCheckpointVersion) + '\n';
  out += "fingerprint " + ckpt.fingerprint + '\n';
  append_widths(out, "feature_widths", net.spec.feature_widths);
  out += "num_classes " + std::to_string(net.spec.num_classes) + '\n';
  append_widths(out, "disc_hidden", net.spec.disc_hidden);
  const Mlp* blocks[] = {&net.feature, &net.classifier, &net.discriminator};
  for (std::size_t b = 0; b < 3; ++b) {
    out += std::string("block ") + kBlockNames[b] + ' ' + std::to_string(blocks[b]->layers.size()) + '\n';
    for (const LayerParams& layer : blocks[b]->layers) {
      out += "layer " + std::to_string(layer.weights.rows()) + ' ' + std::to_string(layer.weights.cols()) + '\n';
      for (std::size_t r = 0; r < layer.weights.rows(); ++r) append_values(out, "w", layer.weights.row(r));
      append_values(out, "b", layer.bias);
    }
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text, const std::string& origin) {
  LineReader in(text, origin);
  const auto version = in.next(kMagic);
  if (version.size() != 1 || in.to_size(version[0]) != static_cast<std::size_t>(kCheckpointVersion)) {
    throw in.fail("unsupported checkpoint version");
  }
  const auto fp = in.next("fingerprint");
  if (fp.size() != 1) throw in.fail("fingerprint must be one token");

  NetworkSpec declared;
  declared.feature_widths = in.sizes(in.next("feature_widths"));
  const auto classes = in.sizes(in.next("num_classes"));
  if (classes.size() != 1) throw in.fail("num_classes must be one integer");
  declared.num_classes = classes[0];
  declared.disc_hidden = in.sizes(in.next("disc_hidden"));

  Checkpoint ckpt;
  ckpt.fingerprint = std::string(fp[0]);
  ckpt.network.feature = read_block(in, kBlockNames[0]);
  ckpt.network.classifier = read_block(in, kBlockNames[1]);
  ckpt.network.discriminator = read_block(in, kBlockNames[2]);
  if (!in.next("end").empty()) throw in.fail("trailing tokens after 'end'");

  ckpt.network.spec =
      infer_spec(ckpt.network.feature, ckpt.network.classifier, ckpt.network.discriminator);
  const NetworkSpec& got = ckpt.network.spec;
  if (got.feature_widths != declared.feature_widths || got.num_classes != declared.num_classes ||
      got.disc_hidden != declared.disc_hidden) {
    throw Error(ErrorKind::dimension, origin + ": layer shapes do not match the declared network");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write checkpoint " + path.string());
  out << checkpoint_text(ckpt);
  if (!out) throw Error(ErrorKind::io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), path.string());
}

}  // namespace spa
