#include "mta/instance_io.hpp"

#include <fstream>
#include <stdexcept>

namespace mta {

using nlohmann::json;

namespace {

const char* kind_name(Nonlinearity k) {
  switch (k) {
    case Nonlinearity::kNone: return "none";
    case Nonlinearity::kLogistic: return "logistic";
    case Nonlinearity::kLogQuadratic: return "log-quadratic";
    case Nonlinearity::kCubicAbs: return "cubic-abs";
  }
  return "none";
}

Nonlinearity kind_from_name(const std::string& s) {
  if (s == "none") return Nonlinearity::kNone;
  if (s == "logistic") return Nonlinearity::kLogistic;
  if (s == "log-quadratic") return Nonlinearity::kLogQuadratic;
  if (s == "cubic-abs") return Nonlinearity::kCubicAbs;
  throw std::invalid_argument("unknown nonlinearity: " + s);
}

}  // namespace

json instance_to_json(const ProblemInstance& inst) {
  const auto& d = inst.data();
  json j;
  j["n"] = d.n;
  j["m"] = d.m;
  j["seed"] = d.seed;
  j["family"] = to_string(d.family);
  j["sigma"] = d.sigma;
  json kind = json::array(), a = json::array(), b = json::array(), c = json::array(),
       dd = json::array(), q = json::array();
  for (const auto& f : d.functions) {
    kind.push_back(kind_name(f.kind));
    a.push_back(f.a);
    b.push_back(f.b);
    c.push_back(f.c);
    dd.push_back(f.d);
    q.push_back(std::vector<double>(f.Q.row_major().begin(), f.Q.row_major().end()));
  }
  j["kind"] = kind;
  j["a"] = a;
  j["b"] = b;
  j["c"] = c;
  j["d"] = dd;
  j["Q"] = q;
  j["x0"] = d.x0;
  j["lip_grad"] = d.lip_grad;
  j["lip_hess"] = d.lip_hess;
  j["convexity_flag"] = std::vector<bool>(d.convex.begin(), d.convex.end());
  return j;
}

ProblemInstance instance_from_json(const json& j, InstanceChecks checks) {
  ProblemInstance::Data d;
  d.n = j.at("n").get<std::size_t>();
  d.m = j.at("m").get<std::size_t>();
  d.seed = j.value("seed", std::uint64_t{0});
  d.family = family_from_string(j.value("family", std::string("custom")));
  d.sigma = j.value("sigma", 0.0);
  const auto& a = j.at("a");
  const auto& c = j.at("c");
  const auto& q = j.at("Q");
  const auto& b = j.at("b");
  const auto& dd = j.at("d");
  if (a.size() != d.m + 1 || c.size() != d.m + 1 || q.size() != d.m + 1 || b.size() != d.m + 1 ||
      dd.size() != d.m + 1) {
    throw std::invalid_argument("instance arrays must have m + 1 entries");
  }
  for (std::size_t i = 0; i <= d.m; ++i) {
    CompositeFunction f;
    f.kind = j.contains("kind") ? kind_from_name(j["kind"].at(i).get<std::string>())
                                : (i == 0 ? Nonlinearity::kLogistic : Nonlinearity::kLogQuadratic);
    f.a = a.at(i).get<Vector>();
    f.b = b.at(i).get<double>();
    f.c = c.at(i).get<Vector>();
    f.d = dd.at(i).get<double>();
    f.Q = SymMatrix::from_row_major(d.n, q.at(i).get<std::vector<double>>());
    d.functions.push_back(std::move(f));
  }
  d.x0 = j.at("x0").get<Vector>();
  d.lip_grad = j.at("lip_grad").get<std::vector<double>>();
  d.lip_hess = j.at("lip_hess").get<std::vector<double>>();
  if (j.contains("convexity_flag")) d.convex = j["convexity_flag"].get<std::vector<bool>>();
  return ProblemInstance::create(std::move(d), checks);
}

void save_instance(const ProblemInstance& inst, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << instance_to_json(inst).dump(1) << '\n';
}

ProblemInstance load_instance(const std::filesystem::path& path, InstanceChecks checks) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return instance_from_json(json::parse(in), checks);
}

}  // namespace mta
