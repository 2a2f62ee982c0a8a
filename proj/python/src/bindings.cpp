// Copyright 2026 The TalkPlay Authors.
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

// Python bindings for the core operations: tokenizer, k-means, retrieval,
// metrics, BM25 and sampling.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <random>

#include "talkplay/bm25.hpp"
#include "talkplay/catalog.hpp"
#include "talkplay/evalharness.hpp"
#include "talkplay/quantizer.hpp"
#include "talkplay/retrieval.hpp"
#include "talkplay/seqmodel.hpp"
#include "talkplay/tokenizer.hpp"

namespace py = pybind11;
using namespace talkplay;

namespace {

using Ids = std::vector<tok::TokenId>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Modality modality_arg(const std::string& name) {
  auto m = parse_modality(name);
  if (!m) throw InvalidArgument("unknown modality '" + name + "'");
  return *m;
}

tok::MusicTokenSeq seq_arg(const Ids& ids) {
  if (ids.size() != kNumModalities) throw InvalidArgument("a music block has exactly five ids");
  tok::MusicTokenSeq s;
  std::copy(ids.begin(), ids.end(), s.ids.begin());
  return s;
}

Ids seq_ids(const tok::MusicTokenSeq& s) { return Ids(s.ids.begin(), s.ids.end()); }

retrieval::WeightProfile weights_arg(const py::object& w) {
  if (py::isinstance<py::str>(w)) return retrieval::parse_profile(w.cast<std::string>());
  auto v = w.cast<std::vector<double>>();
  if (v.size() != kNumModalities) throw InvalidArgument("weights need five values");
  retrieval::WeightProfile p;
  std::copy(v.begin(), v.end(), p.lambda.begin());
  p.validate();
  return p;
}

std::vector<std::string> matched_names(std::uint8_t mask) {
  std::vector<std::string> out;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (mask >> m & 1) out.emplace_back(modality_name(kModalityOrder[m]));
  }
  return out;
}

py::list ranked_to_py(const retrieval::RankedList& list) {
  py::list out;
  for (const auto& r : list) {
    py::dict d;
    d["track_id"] = r.track_id;
    d["score"] = r.score;
    d["matched"] = matched_names(r.matched);
    out.append(d);
  }
  return out;
}

catalog::EmbeddingMatrix matrix_arg(const FloatArray& data, Modality m) {
  if (data.ndim() != 2) throw InvalidArgument("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(data.shape(0));
  const auto dim = static_cast<std::uint32_t>(data.shape(1));
  catalog::EmbeddingMatrix out(m, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    out.add_row(std::to_string(i), std::span<const float>(data.data() + i * dim, dim));
  }
  return out;
}

quant::Codebook codebook_arg(const FloatArray& centroids) {
  if (centroids.ndim() != 2) throw InvalidArgument("expected a 2-d centroid array");
  quant::Codebook b;
  b.k = static_cast<std::uint32_t>(centroids.shape(0));
  b.dim = static_cast<std::uint32_t>(centroids.shape(1));
  b.centroids.assign(centroids.data(), centroids.data() + centroids.size());
  return b;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Generative conversational music recommendation core";

  auto error = py::register_exception<Error>(mod, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(mod, "ParseError", error.ptr());
  py::register_exception<IntegrityError>(mod, "IntegrityError", error.ptr());
  py::register_exception<LoadError>(mod, "LoadError", error.ptr());
  py::register_exception<InvalidArgument>(mod, "InvalidArgument", error.ptr());
  py::register_exception<TrainingError>(mod, "TrainingError", error.ptr());
  py::register_exception<NotFound>(mod, "NotFound", error.ptr());

  mod.attr("MODALITIES") = py::make_tuple("playlist", "semantic", "metadata", "lyrics", "audio");
  mod.def("mix_seed", &mix_seed, py::arg("seed"), py::arg("stream"));
  mod.def("stable_hash", [](const std::string& s) { return stable_hash(s); }, py::arg("text"));

  // ---------------------------------------------------------------- tokenizer
  py::class_<tok::Vocabulary>(mod, "Vocabulary")
      .def(py::init<std::uint32_t, std::uint32_t>(), py::arg("base_size"), py::arg("k"))
      .def_property_readonly("base_size", &tok::Vocabulary::base_size)
      .def_property_readonly("k", &tok::Vocabulary::k)
      .def_property_readonly("size", &tok::Vocabulary::size)
      .def_property_readonly("music_begin", &tok::Vocabulary::music_begin)
      .def_property_readonly("music_end", &tok::Vocabulary::music_end)
      .def_property_readonly("som", &tok::Vocabulary::som)
      .def_property_readonly("eom", &tok::Vocabulary::eom)
      .def_property_readonly("playlist_unk", &tok::Vocabulary::playlist_unk)
      .def_property_readonly("user", &tok::Vocabulary::user)
      .def_property_readonly("assistant", &tok::Vocabulary::assistant)
      .def("music_token", [](const tok::Vocabulary& v, const std::string& m, std::uint32_t c) {
        return v.music_token(modality_arg(m), c);
      }, py::arg("modality"), py::arg("cluster"))
      .def("token_surface", [](const tok::Vocabulary& v, tok::TokenId id) { return tok::token_surface(v, id); })
      .def("encode_item", [](const tok::Vocabulary& v, const std::vector<std::optional<std::uint32_t>>& c) {
        if (c.size() != kNumModalities) throw InvalidArgument("an item has exactly five clusters");
        tok::ClusterTuple t;
        std::copy(c.begin(), c.end(), t.begin());
        return seq_ids(tok::encode_item(v, t));
      }, py::arg("clusters"))
      .def("decode_item", [](const tok::Vocabulary& v, const Ids& ids) {
        auto t = tok::decode_item(v, seq_arg(ids));
        return std::vector<std::optional<std::uint32_t>>(t.begin(), t.end());
      }, py::arg("ids"))
      .def("is_valid_item", [](const tok::Vocabulary& v, const Ids& ids) {
        return ids.size() == kNumModalities && tok::is_valid_item(v, seq_arg(ids));
      })
      .def("item_surface", [](const tok::Vocabulary& v, const Ids& ids) { return tok::item_surface(v, seq_arg(ids)); })
      .def("parse_item_surface", [](const tok::Vocabulary& v, const std::string& s) {
        return seq_ids(tok::parse_item_surface(v, s));
      })
      .def("encode_surface", [](const tok::Vocabulary& v, const std::string& s) { return tok::encode_surface(v, s); })
      .def("decode_to_surface", [](const tok::Vocabulary& v, const Ids& ids) { return tok::decode_to_surface(v, ids); })
      .def("__repr__", [](const tok::Vocabulary& v) {
        return "Vocabulary(base_size=" + std::to_string(v.base_size()) + ", k=" + std::to_string(v.k()) + ")";
      });

  // ---------------------------------------------------------------- quantizer
  mod.def("fit_kmeans", [](const FloatArray& data, std::uint32_t k, std::uint64_t seed, std::uint32_t max_iters,
                           double tol) {
    auto r = quant::fit_kmeans(matrix_arg(data, Modality::kSemantic), {.k = k, .seed = seed, .max_iters = max_iters, .tol = tol});
    py::array_t<float> centroids({static_cast<py::ssize_t>(r.codebook.k), static_cast<py::ssize_t>(r.codebook.dim)});
    std::copy(r.codebook.centroids.begin(), r.codebook.centroids.end(), centroids.mutable_data());
    py::dict d;
    d["centroids"] = centroids;
    d["inertia"] = r.codebook.inertia;
    d["inertia_history"] = r.inertia_history;
    d["iterations"] = r.iterations;
    return d;
  }, py::arg("data"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iters") = 100, py::arg("tol") = 1e-6,
     "k-means++ then Lloyd iterations over the rows of a float32 array.");
  mod.def("assign", [](const FloatArray& centroids, const FloatArray& x) {
    auto b = codebook_arg(centroids);
    if (x.ndim() != 1 || static_cast<std::uint32_t>(x.shape(0)) != b.dim) throw InvalidArgument("vector width must match the centroids");
    return quant::assign(b, std::span<const float>(x.data(), b.dim));
  }, py::arg("centroids"), py::arg("vector"));

  // ---------------------------------------------------------------- retrieval
  mod.def("standard_profiles", [] {
    std::vector<std::pair<std::string, std::vector<double>>> out;
    for (const auto& p : retrieval::standard_profiles()) {
      out.emplace_back(p.name, std::vector<double>(p.weights.lambda.begin(), p.weights.lambda.end()));
    }
    return out;
  });
  mod.def("score_partial", [](const tok::Vocabulary& v, const Ids& query, const Ids& item, const py::object& weights) {
    return retrieval::score_partial(v, seq_arg(query), seq_arg(item), weights_arg(weights));
  }, py::arg("vocab"), py::arg("query"), py::arg("item"), py::arg("weights") = "quadratic-c2f");

  py::class_<retrieval::TokenIndex>(mod, "TokenIndex")
      .def(py::init([](const tok::Vocabulary& v, const std::map<std::string, Ids>& items,
                       const std::unordered_map<std::string, double>& popularity) {
        tok::ItemTokens it;
        for (const auto& [id, ids] : items) it[id] = seq_arg(ids);
        return retrieval::TokenIndex(v, std::move(it), popularity);
      }), py::arg("vocab"), py::arg("items"), py::arg("popularity") = std::unordered_map<std::string, double>{})
      .def_static("load", &retrieval::load_index, py::arg("path"))
      .def("save", [](const retrieval::TokenIndex& ix, const std::filesystem::path& p) { retrieval::save_index(ix, p); })
      .def("__len__", &retrieval::TokenIndex::size)
      .def("recommend", [](const retrieval::TokenIndex& ix, const Ids& query, const py::object& weights,
                           std::size_t top_n, const std::set<std::string>& exclude) {
        return ranked_to_py(ix.recommend(seq_arg(query), weights_arg(weights), top_n, exclude));
      }, py::arg("query"), py::arg("weights") = "quadratic-c2f", py::arg("top_n") = 10,
         py::arg("exclude") = std::set<std::string>{});

  // ---------------------------------------------------------------- metrics
  mod.def("mrr", [](const std::vector<eval::Rank>& ranks) { return eval::mrr(ranks); }, py::arg("ranks"),
          "Mean reciprocal rank of 1-based ranks; None is a miss.");
  mod.def("hit_at_k", [](const std::vector<eval::Rank>& ranks, std::size_t k) { return eval::hit_at_k(ranks, k); },
          py::arg("ranks"), py::arg("k"));

  // ---------------------------------------------------------------- bm25
  mod.def("bm25_tokenize", &bm25::tokenize, py::arg("text"));
  py::class_<bm25::Bm25Index>(mod, "Bm25Index")
      .def(py::init([](std::vector<std::pair<std::string, std::string>> docs, double k1, double b) {
        return bm25::Bm25Index(std::move(docs), {k1, b});
      }), py::arg("docs"), py::arg("k1") = 1.2, py::arg("b") = 0.75)
      .def_static("from_catalog", [](const std::filesystem::path& dir) {
        return bm25::index_catalog(catalog::load_catalog(dir));
      }, py::arg("catalog_dir"))
      .def("__len__", &bm25::Bm25Index::size)
      .def("idf", &bm25::Bm25Index::idf, py::arg("term"))
      .def("scores", &bm25::Bm25Index::scores, py::arg("query"))
      .def("rank", [](const bm25::Bm25Index& ix, const std::string& q, std::size_t top_n,
                      const std::set<std::string>& exclude) { return ranked_to_py(ix.rank(q, top_n, exclude)); },
           py::arg("query"), py::arg("top_n") = 10, py::arg("exclude") = std::set<std::string>{});

  // ---------------------------------------------------------------- sampling
  mod.def("sample", [](const std::vector<double>& logits, std::size_t n, double temperature, double top_p,
                       double repetition_penalty, std::uint64_t seed, const Ids& previous) {
    seq::SamplingConfig s{temperature, top_p, repetition_penalty};
    s.validate();
    std::mt19937_64 rng(seed);
    Ids out(n);
    for (auto& id : out) id = seq::sample_from_logits(logits, previous, s, rng);
    return out;
  }, py::arg("logits"), py::arg("n") = 1, py::arg("temperature") = 1.0, py::arg("top_p") = 0.9,
     py::arg("repetition_penalty") = 1.0, py::arg("seed") = 0, py::arg("previous") = Ids{},
     "n independent draws from one logit vector.");
}
