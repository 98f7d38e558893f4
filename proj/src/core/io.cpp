#include "core/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace brm {

namespace {

using nlohmann::json;

std::string context(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw SchemaError(where + "expected a number, got '" + s + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& s, const std::string& where) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw SchemaError(where + "expected an integer, got '" + s + "'");
  }
  return v;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "' for reading");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.empty()) throw SchemaError(path + ": empty file");
  return lines;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open '" + path + "' for writing");
  return out;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols,
                        const std::string& where) {
  if (!j.is_array() || j.size() != rows) {
    throw SchemaError(where + ": expected " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const json& row = j[i];
    if (!row.is_array() || row.size() != cols) {
      throw SchemaError(where + ": row " + std::to_string(i) + " expected " +
                        std::to_string(cols) + " entries");
    }
    for (std::size_t k = 0; k < cols; ++k) {
      if (!row[k].is_number()) throw SchemaError(where + ": non-numeric entry");
      m(i, k) = row[k].get<double>();
    }
  }
  return m;
}

Vec vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  Vec v;
  v.reserve(j.size());
  for (const json& e : j) {
    if (!e.is_number()) throw SchemaError(where + ": non-numeric entry");
    v.push_back(e.get<double>());
  }
  return v;
}

json load_json_document(const std::string& path, const std::string& expected_format) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "' for reading");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != expected_format) {
    throw SchemaError(path + ": expected a '" + expected_format + "' document");
  }
  if (doc.value("format_version", -1) != 1) {
    throw SchemaError(path + ": unsupported format_version (this build reads version 1)");
  }
  return doc;
}

void write_json_document(const std::string& path, const json& doc) {
  std::ofstream out = open_out(path);
  out << doc.dump(2) << "\n";
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string to_hex_u64(std::uint64_t v) {
  char buf[19] = "0x";
  const auto [ptr, ec] = std::to_chars(buf + 2, buf + sizeof(buf), v, 16);
  (void)ec;
  return std::string(buf, ptr);
}

std::uint64_t from_hex_u64(const std::string& s) {
  if (s.size() < 3 || s[0] != '0' || s[1] != 'x') {
    throw SchemaError("expected a 0x-prefixed hash, got '" + s + "'");
  }
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data() + 2, s.data() + s.size(), v, 16);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw SchemaError("invalid hash '" + s + "'");
  }
  return v;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void save_preferences(const std::string& path, std::span<const PreferenceExample> data) {
  if (data.empty()) throw UsageError("save_preferences: empty dataset");
  std::ofstream out = open_out(path);
  const std::size_t dim = data.front().winner.size();
  out << "prompt_id";
  for (std::size_t i = 0; i < dim; ++i) out << ",w" << i;
  for (std::size_t i = 0; i < dim; ++i) out << ",l" << i;
  out << "\n";
  for (const PreferenceExample& ex : data) {
    out << ex.prompt_id;
    for (double v : ex.winner) out << "," << format_double(v);
    for (double v : ex.loser) out << "," << format_double(v);
    out << "\n";
  }
}

std::vector<PreferenceExample> load_preferences(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  const std::vector<std::string> header = split_csv_line(lines[0]);
  if (header.empty() || header[0] != "prompt_id" || (header.size() - 1) % 2 != 0) {
    throw SchemaError(context(path, 1) + "expected header prompt_id,w0..,l0..");
  }
  const std::size_t dim = (header.size() - 1) / 2;
  if (dim == 0) throw SchemaError(context(path, 1) + "no feature columns");
  std::vector<PreferenceExample> data;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const std::vector<std::string> fields = split_csv_line(lines[ln]);
    const std::string where = context(path, ln + 1);
    if (fields.size() != header.size()) {
      throw SchemaError(where + "expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    }
    PreferenceExample ex;
    ex.prompt_id = parse_int(fields[0], where);
    ex.winner.reserve(dim);
    ex.loser.reserve(dim);
    for (std::size_t i = 0; i < dim; ++i) ex.winner.push_back(parse_double(fields[1 + i], where));
    for (std::size_t i = 0; i < dim; ++i) {
      ex.loser.push_back(parse_double(fields[1 + dim + i], where));
    }
    data.push_back(std::move(ex));
  }
  if (data.empty()) throw SchemaError(path + ": no data rows");
  return data;
}

void save_feature_pool(const std::string& path, const FeaturePool& pool) {
  std::ofstream out = open_out(path);
  out << "prompt_id,response_id";
  for (std::size_t i = 0; i < pool.dim; ++i) out << ",x" << i;
  for (const std::string& name : pool.evaluators) out << "," << name;
  out << "\n";
  for (const FeaturePool::Prompt& prompt : pool.prompts) {
    for (std::size_t r = 0; r < prompt.features.size(); ++r) {
      out << prompt.prompt_id << "," << r;
      for (double v : prompt.features[r]) out << "," << format_double(v);
      for (const std::string& name : pool.evaluators) {
        out << "," << format_double(prompt.evals.at(name)[r]);
      }
      out << "\n";
    }
  }
}

FeaturePool load_feature_pool(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  const std::vector<std::string> header = split_csv_line(lines[0]);
  if (header.size() < 3 || header[0] != "prompt_id" || header[1] != "response_id") {
    throw SchemaError(context(path, 1) + "expected header prompt_id,response_id,x0,...");
  }
  FeaturePool pool;
  std::size_t col = 2;
  while (col < header.size() && header[col] == "x" + std::to_string(col - 2)) ++col;
  pool.dim = col - 2;
  if (pool.dim == 0) throw SchemaError(context(path, 1) + "no feature columns");
  for (; col < header.size(); ++col) pool.evaluators.push_back(header[col]);

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const std::vector<std::string> fields = split_csv_line(lines[ln]);
    const std::string where = context(path, ln + 1);
    if (fields.size() != header.size()) {
      throw SchemaError(where + "expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    }
    const std::int64_t prompt_id = parse_int(fields[0], where);
    const std::int64_t response_id = parse_int(fields[1], where);
    if (pool.prompts.empty() || pool.prompts.back().prompt_id != prompt_id) {
      pool.prompts.push_back(FeaturePool::Prompt{prompt_id, {}, {}});
      for (const std::string& name : pool.evaluators) pool.prompts.back().evals[name] = {};
    }
    FeaturePool::Prompt& prompt = pool.prompts.back();
    if (response_id != static_cast<std::int64_t>(prompt.features.size())) {
      throw SchemaError(where + "response_id " + std::to_string(response_id) +
                        " out of order (expected " + std::to_string(prompt.features.size()) +
                        ")");
    }
    Vec x;
    x.reserve(pool.dim);
    for (std::size_t i = 0; i < pool.dim; ++i) x.push_back(parse_double(fields[2 + i], where));
    prompt.features.push_back(std::move(x));
    for (std::size_t e = 0; e < pool.evaluators.size(); ++e) {
      prompt.evals[pool.evaluators[e]].push_back(
          parse_double(fields[2 + pool.dim + e], where));
    }
  }
  if (pool.prompts.empty()) throw SchemaError(path + ": no data rows");
  return pool;
}

void save_pool(const std::string& path, const ResponsePool& pool) {
  std::ofstream out = open_out(path);
  out << "prompt_id,response_id,proxy_score";
  for (const std::string& name : pool.evaluators) out << "," << name;
  out << "\n";
  for (const PromptResponses& prompt : pool.prompts) {
    for (std::size_t r = 0; r < prompt.proxy.size(); ++r) {
      out << prompt.prompt_id << "," << r << "," << format_double(prompt.proxy[r]);
      for (const std::string& name : pool.evaluators) {
        out << "," << format_double(prompt.evals.at(name)[r]);
      }
      out << "\n";
    }
  }
}

ResponsePool load_pool(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  const std::vector<std::string> header = split_csv_line(lines[0]);
  if (header.size() < 3 || header[0] != "prompt_id" || header[1] != "response_id" ||
      header[2] != "proxy_score") {
    throw SchemaError(context(path, 1) +
                      "expected header prompt_id,response_id,proxy_score,...");
  }
  ResponsePool pool;
  for (std::size_t col = 3; col < header.size(); ++col) {
    if (header[col] == "proxy" || header[col].empty()) {
      throw SchemaError(context(path, 1) + "bad evaluator column name '" + header[col] + "'");
    }
    pool.evaluators.push_back(header[col]);
  }
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const std::vector<std::string> fields = split_csv_line(lines[ln]);
    const std::string where = context(path, ln + 1);
    if (fields.size() != header.size()) {
      throw SchemaError(where + "expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    }
    const std::int64_t prompt_id = parse_int(fields[0], where);
    const std::int64_t response_id = parse_int(fields[1], where);
    if (pool.prompts.empty() || pool.prompts.back().prompt_id != prompt_id) {
      pool.prompts.push_back(PromptResponses{prompt_id, {}, {}});
      for (const std::string& name : pool.evaluators) pool.prompts.back().evals[name] = {};
    }
    PromptResponses& prompt = pool.prompts.back();
    if (response_id != static_cast<std::int64_t>(prompt.proxy.size())) {
      throw SchemaError(where + "response_id " + std::to_string(response_id) +
                        " breaks the index alignment (expected " +
                        std::to_string(prompt.proxy.size()) + ")");
    }
    prompt.proxy.push_back(parse_double(fields[2], where));
    for (std::size_t e = 0; e < pool.evaluators.size(); ++e) {
      prompt.evals[pool.evaluators[e]].push_back(parse_double(fields[3 + e], where));
    }
  }
  if (pool.prompts.empty()) throw SchemaError(path + ": no data rows");
  return pool;
}

void save_curve(const std::string& path, std::span<const CurveRow> rows) {
  std::ofstream out = open_out(path);
  out << "method,k,n,kl,evaluator,value\n";
  for (const CurveRow& row : rows) {
    out << row.method << "," << format_double(row.k) << "," << row.n << ","
        << format_double(row.kl) << "," << row.evaluator << "," << format_double(row.value)
        << "\n";
  }
}

void save_net(const std::string& path, const RewardNet& net) {
  validate_net(net);
  json doc;
  doc["format"] = "brm-net";
  doc["format_version"] = 1;
  doc["activation"] = net.activation == Activation::kTanh ? "tanh" : "linear";
  doc["d_in"] = net.input_dim();
  doc["seed"] = net.seed;
  json widths = json::array();
  for (const Layer& layer : net.layers) widths.push_back(layer.w0.rows());
  doc["widths"] = widths;
  doc["rank"] = net.layers.empty() ? 0 : net.layers.front().adapter.rank();
  json layers = json::array();
  for (const Layer& layer : net.layers) {
    json jl;
    jl["w0"] = matrix_to_json(layer.w0);
    jl["bias"] = layer.bias;
    jl["a"] = matrix_to_json(layer.adapter.a);
    jl["b"] = matrix_to_json(layer.adapter.b);
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  doc["head"] = net.head;
  if (net.provenance.present) {
    doc["provenance"] = {{"data_fingerprint", to_hex_u64(net.provenance.data_fingerprint)},
                         {"lambda", net.provenance.lambda}};
  }
  write_json_document(path, doc);
}

RewardNet load_net(const std::string& path) {
  const json doc = load_json_document(path, "brm-net");
  RewardNet net;
  try {
    const std::string act = doc.at("activation").get<std::string>();
    if (act == "tanh") {
      net.activation = Activation::kTanh;
    } else if (act == "linear") {
      net.activation = Activation::kLinear;
    } else {
      throw SchemaError(path + ": unknown activation '" + act + "'");
    }
    net.seed = doc.at("seed").get<std::uint64_t>();
    const std::size_t d_in = doc.at("d_in").get<std::size_t>();
    const std::size_t rank = doc.at("rank").get<std::size_t>();
    const json& widths = doc.at("widths");
    const json& layers = doc.at("layers");
    if (!layers.is_array() || layers.size() != widths.size()) {
      throw SchemaError(path + ": layers/widths mismatch");
    }
    std::size_t n_in = d_in;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const std::size_t width = widths[li].get<std::size_t>();
      const json& jl = layers[li];
      Layer layer;
      const std::string where = path + ": layer " + std::to_string(li);
      layer.w0 = matrix_from_json(jl.at("w0"), width, n_in, where + " w0");
      layer.bias = vec_from_json(jl.at("bias"), where + " bias");
      layer.adapter.a = matrix_from_json(jl.at("a"), rank, n_in, where + " a");
      layer.adapter.b = matrix_from_json(jl.at("b"), width, rank, where + " b");
      net.layers.push_back(std::move(layer));
      n_in = width;
    }
    net.head = vec_from_json(doc.at("head"), path + ": head");
    if (doc.contains("provenance")) {
      net.provenance.present = true;
      net.provenance.data_fingerprint =
          from_hex_u64(doc.at("provenance").at("data_fingerprint").get<std::string>());
      net.provenance.lambda = doc.at("provenance").at("lambda").get<double>();
    }
  } catch (const json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  try {
    validate_net(net);
  } catch (const ShapeError& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return net;
}

void save_posterior(const std::string& path, const PosteriorState& post) {
  json doc;
  doc["format"] = "brm-posterior";
  doc["format_version"] = 1;
  doc["lambda"] = post.lambda;
  doc["data_fingerprint"] = to_hex_u64(post.data_fingerprint);
  doc["theta_map"] = post.theta_map;
  doc["covariance"] = matrix_to_json(post.covariance);
  write_json_document(path, doc);
}

PosteriorState load_posterior(const std::string& path) {
  const json doc = load_json_document(path, "brm-posterior");
  PosteriorState post;
  try {
    post.lambda = doc.at("lambda").get<double>();
    post.data_fingerprint = from_hex_u64(doc.at("data_fingerprint").get<std::string>());
    post.theta_map = vec_from_json(doc.at("theta_map"), path + ": theta_map");
    const std::size_t p = post.theta_map.size();
    post.covariance = matrix_from_json(doc.at("covariance"), p, p, path + ": covariance");
  } catch (const json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  if (!(post.lambda > 0.0)) throw SchemaError(path + ": lambda must be > 0");
  return post;
}

}  // namespace brm
