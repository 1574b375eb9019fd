#include "tokenclip/io.hpp"

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tokenclip {

namespace {

namespace fs = std::filesystem;

void put_bytes(std::ostream& os, const unsigned char* b, size_t n) {
  os.write(reinterpret_cast<const char*>(b), static_cast<long>(n));
}

void get_bytes(std::istream& is, unsigned char* b, size_t n, const std::string& what) {
  is.read(reinterpret_cast<char*>(b), static_cast<long>(n));
  require(static_cast<size_t>(is.gcount()) == n, "truncated file while reading " + what);
}

void put_u8(std::ostream& os, uint8_t v) { put_bytes(os, &v, 1); }

uint8_t get_u8(std::istream& is, const std::string& what) {
  uint8_t v;
  get_bytes(is, &v, 1, what);
  return v;
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  put_bytes(os, b, 4);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  get_bytes(is, b, 4, what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_u64(std::ostream& os, uint64_t v) {
  put_u32(os, static_cast<uint32_t>(v & 0xffffffffu));
  put_u32(os, static_cast<uint32_t>(v >> 32));
}

uint64_t get_u64(std::istream& is, const std::string& what) {
  uint64_t lo = get_u32(is, what);
  uint64_t hi = get_u32(is, what);
  return lo | (hi << 32);
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<uint32_t>(v)); }

float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_u32(is, what));
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<uint64_t>(v)); }

double get_f64(std::istream& is, const std::string& what) {
  return std::bit_cast<double>(get_u64(is, what));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open: " + path);
  return is;
}

void check_magic(std::istream& is, const char* expect, const std::string& what) {
  unsigned char got[4];
  get_bytes(is, got, 4, what + " magic");
  for (int i = 0; i < 4; ++i)
    require(got[i] == static_cast<unsigned char>(expect[i]), "not a " + what + " (bad magic)");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

long parse_int(const std::string& key, const std::string& v) {
  size_t pos = 0;
  long out = 0;
  try {
    out = std::stol(v, &pos);
  } catch (const std::exception&) {
    fail("invalid integer for config key '" + key + "': " + v);
  }
  require(pos == v.size(), "invalid integer for config key '" + key + "': " + v);
  return out;
}

double parse_float(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    fail("invalid number for config key '" + key + "': " + v);
  }
  require(pos == v.size(), "invalid number for config key '" + key + "': " + v);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("invalid bool for config key '" + key + "': " + v);
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    fail("invalid seed for config key '" + key + "': " + v);
  }
  require(pos == v.size(), "invalid seed for config key '" + key + "': " + v);
  return out;
}

}  // namespace

void save_token_file(const std::string& path, const TokenGrid& grid) {
  grid.validate();
  std::ofstream os = open_out(path);
  os.write("TOKB", 4);
  put_u8(os, 1);
  put_u32(os, static_cast<uint32_t>(grid.n()));
  put_u32(os, static_cast<uint32_t>(grid.dim()));
  put_u32(os, static_cast<uint32_t>(grid.h));
  put_u32(os, static_cast<uint32_t>(grid.w));
  put_u8(os, grid.global_embedding ? 1 : 0);
  for (int i = 0; i < grid.n(); ++i)
    for (int j = 0; j < grid.dim(); ++j) put_f32(os, static_cast<float>(grid.tokens(i, j)));
  if (grid.global_embedding)
    for (int j = 0; j < grid.dim(); ++j)
      put_f32(os, static_cast<float>((*grid.global_embedding)(j)));
  require(os.good(), "write failed: " + path);
}

TokenGrid load_token_file(const std::string& path) {
  std::ifstream is = open_in(path);
  check_magic(is, "TOKB", "token file");
  uint8_t ver = get_u8(is, "token file version");
  require(ver == 1, "unsupported token file version " + std::to_string(ver));
  uint32_t n = get_u32(is, "token count");
  uint32_t d = get_u32(is, "token dimension");
  uint32_t h = get_u32(is, "grid height");
  uint32_t w = get_u32(is, "grid width");
  require(static_cast<uint64_t>(h) * w == n, "token file: h*w does not match token count");
  require(d > 0 && n > 0, "token file: empty grid");
  uint8_t flag = get_u8(is, "global embedding flag");
  require(flag == 0 || flag == 1, "token file: bad global embedding flag");
  TokenGrid grid;
  grid.h = static_cast<int>(h);
  grid.w = static_cast<int>(w);
  grid.tokens.resize(n, d);
  for (uint32_t i = 0; i < n; ++i)
    for (uint32_t j = 0; j < d; ++j) grid.tokens(i, j) = get_f32(is, "token data");
  if (flag == 1) {
    Vec g(d);
    for (uint32_t j = 0; j < d; ++j) g(j) = get_f32(is, "global embedding");
    grid.global_embedding = g;
  }
  grid.validate();
  return grid;
}

void save_mask_pgm(const std::string& path, const Arr& mask) {
  require(mask.size() > 0, "mask: empty");
  std::ofstream os = open_out(path);
  os << "P5\n" << mask.cols() << " " << mask.rows() << "\n255\n";
  for (long r = 0; r < mask.rows(); ++r)
    for (long c = 0; c < mask.cols(); ++c) {
      double v = mask(r, c);
      require(v == 0.0 || v == 1.0, "mask: entries must be 0 or 1");
      put_u8(os, v == 1.0 ? 255 : 0);
    }
  require(os.good(), "write failed: " + path);
}

namespace {

int next_pgm_int(std::istream& is, const std::string& path) {
  // skip whitespace and '#' comment lines between header fields
  int ch = is.peek();
  while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else {
      is.get();
    }
    ch = is.peek();
  }
  int v = -1;
  is >> v;
  require(is.good() && v >= 0, "bad header in " + path);
  return v;
}

}  // namespace

Arr load_mask_pgm(const std::string& path) {
  std::ifstream is = open_in(path);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  require(is.good() && m0 == 'P' && m1 == '5', "not a binary PGM: " + path);
  int w = next_pgm_int(is, path);
  int h = next_pgm_int(is, path);
  int maxval = next_pgm_int(is, path);
  require(maxval == 255, "unsupported PGM maxval in " + path);
  is.get();  // single whitespace after maxval
  Arr out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      uint8_t b = get_u8(is, "mask data in " + path);
      require(b == 0 || b == 255, "mask byte must be 0 or 255 in " + path);
      out(r, c) = b == 255 ? 1.0 : 0.0;
    }
  return out;
}

void save_score_pgm(const std::string& path, const Arr& scores) {
  require(scores.size() > 0, "score map: empty");
  std::ofstream os = open_out(path);
  os << "P5\n" << scores.cols() << " " << scores.rows() << "\n255\n";
  for (long r = 0; r < scores.rows(); ++r)
    for (long c = 0; c < scores.cols(); ++c) {
      double v = std::min(1.0, std::max(0.0, scores(r, c)));
      put_u8(os, static_cast<uint8_t>(std::floor(v * 255.0 + 0.5)));
    }
  require(os.good(), "write failed: " + path);
}

namespace {

void put_config(std::ostream& os, const TrainConfig& c) {
  put_u32(os, static_cast<uint32_t>(c.q));
  put_u32(os, static_cast<uint32_t>(c.k));
  put_f64(os, c.epsilon);
  put_f64(os, c.lambda);
  put_u32(os, static_cast<uint32_t>(c.sinkhorn_iters));
  put_f64(os, c.sinkhorn_tol);
  put_f64(os, c.tau);
  put_f64(os, c.gamma);
  put_f64(os, c.smooth);
  put_f64(os, c.delta_minus);
  put_f64(os, c.delta_plus);
  put_f64(os, c.eta);
  put_f64(os, c.xi);
  put_f64(os, c.lr);
  put_u32(os, static_cast<uint32_t>(c.batch_size));
  put_u32(os, static_cast<uint32_t>(c.epochs));
  put_u64(os, c.seed);
  put_u8(os, c.literal_hinge ? 1 : 0);
  put_u8(os, c.enable_da ? 1 : 0);
}

TrainConfig get_config(std::istream& is) {
  TrainConfig c;
  const std::string what = "checkpoint config";
  c.q = static_cast<int>(get_u32(is, what));
  c.k = static_cast<int>(get_u32(is, what));
  c.epsilon = get_f64(is, what);
  c.lambda = get_f64(is, what);
  c.sinkhorn_iters = static_cast<int>(get_u32(is, what));
  c.sinkhorn_tol = get_f64(is, what);
  c.tau = get_f64(is, what);
  c.gamma = get_f64(is, what);
  c.smooth = get_f64(is, what);
  c.delta_minus = get_f64(is, what);
  c.delta_plus = get_f64(is, what);
  c.eta = get_f64(is, what);
  c.xi = get_f64(is, what);
  c.lr = get_f64(is, what);
  c.batch_size = static_cast<int>(get_u32(is, what));
  c.epochs = static_cast<int>(get_u32(is, what));
  c.seed = get_u64(is, what);
  c.literal_hinge = get_u8(is, what) == 1;
  c.enable_da = get_u8(is, what) == 1;
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const SubspaceModel& m, const TrainConfig& cfg) {
  require(m.q == cfg.q, "checkpoint: model/config subspace count mismatch");
  std::ofstream os = open_out(path);
  os.write("TCKP", 4);
  put_u8(os, 1);
  put_config(os, cfg);
  put_u32(os, static_cast<uint32_t>(m.d));
  visit_params(const_cast<SubspaceModel&>(m), [&](auto& t) {
    for (long i = 0; i < t.size(); ++i) put_f64(os, t.data()[i]);
  });
  require(os.good(), "write failed: " + path);
}

std::pair<SubspaceModel, TrainConfig> load_checkpoint(const std::string& path) {
  std::ifstream is = open_in(path);
  check_magic(is, "TCKP", "checkpoint");
  uint8_t ver = get_u8(is, "checkpoint version");
  require(ver == 1, "unsupported checkpoint version " + std::to_string(ver));
  TrainConfig cfg = get_config(is);
  cfg.validate();
  int d = static_cast<int>(get_u32(is, "checkpoint model dimension"));
  require(d >= 1, "checkpoint: bad model dimension");
  SubspaceModel shape = init_model(d, cfg.q, 0, 0.0);
  SubspaceModel m = zeros_like(shape);
  m.d = d;
  m.q = cfg.q;
  visit_params(m, [&](auto& t) {
    for (long i = 0; i < t.size(); ++i) t.data()[i] = get_f64(is, "checkpoint parameters");
  });
  return {std::move(m), cfg};
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    require(eq != std::string::npos,
            path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    require(!key.empty(), path + ":" + std::to_string(lineno) + ": empty key");
    out[key] = val;
  }
  return out;
}

TrainConfig train_config_from_file(const std::string& path) {
  TrainConfig c;
  for (const auto& [k, v] : parse_config_file(path)) {
    if (k == "q")
      c.q = static_cast<int>(parse_int(k, v));
    else if (k == "k")
      c.k = static_cast<int>(parse_int(k, v));
    else if (k == "epsilon")
      c.epsilon = parse_float(k, v);
    else if (k == "lambda")
      c.lambda = parse_float(k, v);
    else if (k == "sinkhorn_iters")
      c.sinkhorn_iters = static_cast<int>(parse_int(k, v));
    else if (k == "sinkhorn_tol")
      c.sinkhorn_tol = parse_float(k, v);
    else if (k == "tau")
      c.tau = parse_float(k, v);
    else if (k == "gamma")
      c.gamma = parse_float(k, v);
    else if (k == "smooth")
      c.smooth = parse_float(k, v);
    else if (k == "delta_minus")
      c.delta_minus = parse_float(k, v);
    else if (k == "delta_plus")
      c.delta_plus = parse_float(k, v);
    else if (k == "eta")
      c.eta = parse_float(k, v);
    else if (k == "xi")
      c.xi = parse_float(k, v);
    else if (k == "lr")
      c.lr = parse_float(k, v);
    else if (k == "batch_size")
      c.batch_size = static_cast<int>(parse_int(k, v));
    else if (k == "epochs")
      c.epochs = static_cast<int>(parse_int(k, v));
    else if (k == "seed")
      c.seed = parse_u64(k, v);
    else if (k == "literal_hinge")
      c.literal_hinge = parse_bool(k, v);
    else if (k == "enable_da")
      c.enable_da = parse_bool(k, v);
    else
      fail("unknown config key: " + k);
  }
  c.validate();
  return c;
}

SyntheticSpec synthetic_spec_from_file(const std::string& path) {
  SyntheticSpec s;
  for (const auto& [k, v] : parse_config_file(path)) {
    if (k == "n_train")
      s.n_train = static_cast<int>(parse_int(k, v));
    else if (k == "n_test")
      s.n_test = static_cast<int>(parse_int(k, v));
    else if (k == "h")
      s.h = static_cast<int>(parse_int(k, v));
    else if (k == "w")
      s.w = static_cast<int>(parse_int(k, v));
    else if (k == "d")
      s.d = static_cast<int>(parse_int(k, v));
    else if (k == "s")
      s.s = static_cast<int>(parse_int(k, v));
    else if (k == "anomaly_rate")
      s.anomaly_rate = parse_float(k, v);
    else if (k == "rect_min")
      s.rect_min = static_cast<int>(parse_int(k, v));
    else if (k == "rect_max")
      s.rect_max = static_cast<int>(parse_int(k, v));
    else if (k == "shift_magnitude")
      s.shift_magnitude = parse_float(k, v);
    else if (k == "noise_scale")
      s.noise_scale = parse_float(k, v);
    else if (k == "n_normal_clusters")
      s.n_normal_clusters = static_cast<int>(parse_int(k, v));
    else if (k == "seed")
      s.seed = parse_u64(k, v);
    else
      fail("unknown config key: " + k);
  }
  s.validate();
  return s;
}

namespace {

std::string sample_stem(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

void write_spec(const std::string& path, const SyntheticSpec& s) {
  std::ofstream os(path);
  require(os.good(), "cannot open for writing: " + path);
  os << "n_train = " << s.n_train << "\n";
  os << "n_test = " << s.n_test << "\n";
  os << "h = " << s.h << "\n";
  os << "w = " << s.w << "\n";
  os << "d = " << s.d << "\n";
  os << "s = " << s.s << "\n";
  os << "anomaly_rate = " << fmt_double(s.anomaly_rate) << "\n";
  os << "rect_min = " << s.rect_min << "\n";
  os << "rect_max = " << s.rect_max << "\n";
  os << "shift_magnitude = " << fmt_double(s.shift_magnitude) << "\n";
  os << "noise_scale = " << fmt_double(s.noise_scale) << "\n";
  os << "n_normal_clusters = " << s.n_normal_clusters << "\n";
  os << "seed = " << s.seed << "\n";
  require(os.good(), "write failed: " + path);
}

void save_split(const std::string& dir, const std::vector<LabeledSample>& split) {
  fs::create_directories(dir);
  for (size_t i = 0; i < split.size(); ++i) {
    save_token_file(dir + "/" + sample_stem(static_cast<int>(i)) + ".tokb", split[i].grid);
    save_mask_pgm(dir + "/" + sample_stem(static_cast<int>(i)) + ".pgm", split[i].mask);
  }
}

std::vector<LabeledSample> load_split(const std::string& dir, int count) {
  std::vector<LabeledSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    LabeledSample s;
    s.grid = load_token_file(dir + "/" + sample_stem(i) + ".tokb");
    s.mask = load_mask_pgm(dir + "/" + sample_stem(i) + ".pgm");
    s.label = (s.mask == 1.0).any() ? 1 : 0;
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(dir);
  write_spec(dir + "/dataset.txt", ds.spec);
  save_split(dir + "/train", ds.train);
  save_split(dir + "/test", ds.test);
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.spec = synthetic_spec_from_file(dir + "/dataset.txt");
  ds.train = load_split(dir + "/train", ds.spec.n_train);
  ds.test = load_split(dir + "/test", ds.spec.n_test);
  return ds;
}

std::string fmt_double(double x) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) return buf;
  }
  return buf;
}

std::string fmt_loss_csv_header() {
  return "epoch,loss_global,loss_base,loss_da,loss_hinge,loss_reg,loss_total";
}

std::string fmt_loss_csv_row(int epoch, const LossBreakdown& l) {
  std::ostringstream os;
  os << epoch << ',' << fmt_double(l.global) << ',' << fmt_double(l.base) << ','
     << fmt_double(l.da) << ',' << fmt_double(l.hinge) << ',' << fmt_double(l.reg) << ','
     << fmt_double(l.total);
  return os.str();
}

}  // namespace tokenclip
