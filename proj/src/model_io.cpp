#include <charconv>
#include <string>

#include "mal2gcn/error.hpp"
#include "mal2gcn/gcn.hpp"
#include "mal2gcn/text.hpp"

namespace mal2gcn {

namespace {

constexpr std::string_view kMagic = "#mal2gcn-model";
constexpr std::string_view kVersion = "v1";

template <typename Derived>
void emit_matrix(std::string& out, std::string_view name, const Eigen::MatrixBase<Derived>& w) {
  out += "matrix ";
  out += name;
  out += ' ' + std::to_string(w.rows()) + ' ' + std::to_string(w.cols()) + '\n';
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (j) out += ' ';
      out += format_double(w(i, j));
    }
    out += '\n';
  }
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : lines_(split_lines(text)) {}

  std::string_view next(std::string_view what) {
    if (pos_ >= lines_.size()) throw DataError("corrupt model file: truncated before " + std::string(what));
    return lines_[pos_++];
  }
  std::size_t line_no() const { return pos_; }

 private:
  std::vector<std::string_view> lines_;
  std::size_t pos_ = 0;
};

std::map<std::string, std::string> keyed_line(std::string_view line, std::string_view key) {
  auto words = split_fields(line, ' ');
  if (words.empty() || words[0] != key) {
    throw DataError("corrupt model file: expected '" + std::string(key) + "' line");
  }
  std::map<std::string, std::string> values;
  for (std::size_t i = 1; i < words.size(); ++i) {
    auto eq = words[i].find('=');
    if (eq == std::string_view::npos) throw DataError("corrupt model file: bad entry in " + std::string(key));
    values.emplace(std::string(words[i].substr(0, eq)), std::string(words[i].substr(eq + 1)));
  }
  return values;
}

bool parse_flag(const std::string& value) {
  if (value == "1") return true;
  if (value == "0") return false;
  throw DataError("corrupt model file: bad flag value '" + value + "'");
}

template <typename Derived>
void read_matrix(LineReader& reader, std::string_view name, Eigen::MatrixBase<Derived>& w) {
  auto words = split_fields(reader.next(name), ' ');
  if (words.size() != 4 || words[0] != "matrix" || words[1] != name) {
    throw DataError("corrupt model file: expected matrix " + std::string(name));
  }
  const auto rows = parse_size(words[2], "matrix rows");
  const auto cols = parse_size(words[3], "matrix cols");
  if (rows != static_cast<std::size_t>(w.rows()) || cols != static_cast<std::size_t>(w.cols())) {
    throw DataError("corrupt model file: matrix " + std::string(name) + " has wrong shape");
  }
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const auto line = reader.next(name);
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      while (p < end && *p == ' ') ++p;
      double value = 0.0;
      auto [next, ec] = std::from_chars(p, end, value);
      if (ec != std::errc()) {
        throw DataError("corrupt model file: bad number at line " + std::to_string(reader.line_no()));
      }
      w(i, j) = value;
      p = next;
    }
    while (p < end && *p == ' ') ++p;
    if (p != end) {
      throw DataError("corrupt model file: extra values at line " + std::to_string(reader.line_no()));
    }
  }
}

}  // namespace

std::string serialize_model(const ModelParams& m, std::string_view vocab_digest) {
  std::string out;
  out += std::string(kMagic) + " " + std::string(kVersion) + "\n";
  out += "dims d=" + std::to_string(m.dims.d) + " h1=" + std::to_string(m.dims.h1) +
         " h2=" + std::to_string(m.dims.h2) + " hg=" + std::to_string(m.dims.hg) + "\n";
  out += "flags nonneg_gcn=" + std::string(m.nonneg_gcn ? "1" : "0") +
         " nonneg_gclf=" + std::string(m.nonneg_gclf ? "1" : "0") +
         " readout=" + std::string(to_string(m.readout)) + "\n";
  out += "vocab sha256=" + std::string(vocab_digest) + "\n";
  emit_matrix(out, "w_gcn1", m.w_gcn1);
  emit_matrix(out, "w_gcn2", m.w_gcn2);
  emit_matrix(out, "w_hidden", m.w_hidden);
  emit_matrix(out, "b_hidden", m.b_hidden);
  emit_matrix(out, "w_out", m.w_out);
  Eigen::Matrix<double, 1, 1> b_out;
  b_out(0, 0) = m.b_out;
  emit_matrix(out, "b_out", b_out);
  out += "end\n";
  return out;
}

LoadedModel parse_model(std::string_view text) {
  LineReader reader(text);
  (void)parse_header(reader.next("header"), kMagic, kVersion);
  const auto dims = keyed_line(reader.next("dims"), "dims");
  const auto flags = keyed_line(reader.next("flags"), "flags");
  const auto vocab = keyed_line(reader.next("vocab"), "vocab");

  Dims d;
  d.d = parse_size(header_value(dims, "d"), "dims d");
  d.h1 = parse_size(header_value(dims, "h1"), "dims h1");
  d.h2 = parse_size(header_value(dims, "h2"), "dims h2");
  d.hg = parse_size(header_value(dims, "hg"), "dims hg");
  LoadedModel loaded;
  loaded.params = ModelParams::zeros(d);
  auto& m = loaded.params;
  m.nonneg_gcn = parse_flag(header_value(flags, "nonneg_gcn"));
  m.nonneg_gclf = parse_flag(header_value(flags, "nonneg_gclf"));
  m.readout = parse_readout(header_value(flags, "readout"));
  loaded.vocab_digest = header_value(vocab, "sha256");

  read_matrix(reader, "w_gcn1", m.w_gcn1);
  read_matrix(reader, "w_gcn2", m.w_gcn2);
  read_matrix(reader, "w_hidden", m.w_hidden);
  read_matrix(reader, "b_hidden", m.b_hidden);
  read_matrix(reader, "w_out", m.w_out);
  Eigen::MatrixXd b_out(1, 1);
  read_matrix(reader, "b_out", b_out);
  m.b_out = b_out(0, 0);
  if (reader.next("end") != "end") throw DataError("corrupt model file: missing end marker");
  return loaded;
}

void save_model(const std::filesystem::path& path, const ModelParams& m, const Vocabulary& vocab) {
  if (m.dims.d != vocab.dim()) {
    throw DimensionError("model input size does not match the vocabulary");
  }
  write_text_file(path, serialize_model(m, vocab.digest()));
}

ModelParams load_model(const std::filesystem::path& path, const Vocabulary& vocab) {
  LoadedModel loaded;
  try {
    loaded = parse_model(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (loaded.vocab_digest != vocab.digest()) {
    throw DataError(path.string() + ": vocabulary hash mismatch (model trained against " +
                    loaded.vocab_digest + ")");
  }
  return std::move(loaded.params);
}

}  // namespace mal2gcn
