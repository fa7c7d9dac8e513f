#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>

#include "hardbatch/augment.hpp"
#include "hardbatch/checkpoint.hpp"
#include "hardbatch/eval.hpp"
#include "hardbatch/losses.hpp"
#include "hardbatch/sampling.hpp"
#include "hardbatch/trainer.hpp"

namespace py = pybind11;
using namespace hardbatch;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& a, const char* name) {
  if (a.ndim() != 2) throw std::invalid_argument(std::string(name) + " must be a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

DoubleArray to_array(const Matrix& m) {
  DoubleArray out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

std::vector<int> to_ints(const IntArray& a) { return std::vector<int>(a.data(), a.data() + a.size()); }

ImageBuffer to_image(const ByteArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw std::invalid_argument("image must have shape (H, W, 3)");
  const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
  return ImageBuffer(h, w, std::vector<std::uint8_t>(a.data(), a.data() + h * w * 3));
}

ByteArray to_array(const ImageBuffer& img) {
  ByteArray out({img.height, img.width, std::size_t{3}});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

TrainConfig parse_config(const py::object& config) {
  const std::string text = py::isinstance<py::str>(config)
                               ? config.cast<std::string>()
                               : py::module_::import("json").attr("dumps")(config).cast<std::string>();
  return config_from_json(nlohmann::json::parse(text));
}

py::dict metrics_to_dict(const MetricsRecord& m) {
  py::dict d;
  d["epoch"] = m.epoch;
  d["step"] = m.step;
  d["sampler"] = m.sampler;
  d["l_id"] = m.l_id;
  d["l_triplet"] = m.l_triplet;
  d["l_adv"] = m.l_adv;
  d["l_total"] = m.l_total;
  d["active_triplet_fraction"] = m.active_triplet_fraction;
  d["intra_batch_similarity"] = m.intra_batch_similarity;
  d["lr"] = m.lr;
  return d;
}

PatchParams patch(double p, double area_lo, double area_hi, double aspect_lo, double aspect_hi) {
  PatchParams params{p, area_lo, area_hi, aspect_lo, aspect_hi};
  params.validate();
  return params;
}

}  // namespace

PYBIND11_MODULE(_hardbatch, m) {
  m.doc() = "Hard-batch metric learning: triplet loss, samplers, scene-adversarial training, retrieval metrics.";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const std::invalid_argument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def(
      "synth_generate",
      [](std::size_t num_classes, std::size_t num_scenes, std::size_t dim, std::size_t samples_per_class,
         double center_radius, double pair_fraction, double pair_sep, double cluster_sigma,
         double scene_shift_magnitude, std::uint64_t seed) {
        const SynthSpec spec{num_classes, num_scenes,    dim,           samples_per_class,     center_radius,
                             pair_fraction, pair_sep, cluster_sigma, scene_shift_magnitude, seed};
        const Dataset ds = synth_generate(spec);
        DoubleArray x({ds.samples.size(), ds.dim});
        IntArray ids(static_cast<py::ssize_t>(ds.samples.size()));
        IntArray scenes(static_cast<py::ssize_t>(ds.samples.size()));
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
          std::copy(ds.samples[i].features.begin(), ds.samples[i].features.end(), x.mutable_data() + i * ds.dim);
          ids.mutable_data()[i] = ds.samples[i].class_id;
          scenes.mutable_data()[i] = ds.samples[i].scene_id;
        }
        return py::make_tuple(x, ids, scenes);
      },
      py::arg("num_classes") = 40, py::arg("num_scenes") = 2, py::arg("dim") = 16,
      py::arg("samples_per_class") = 8, py::arg("center_radius") = 3.0, py::arg("pair_fraction") = 0.5,
      py::arg("pair_sep") = 0.5, py::arg("cluster_sigma") = 0.35, py::arg("scene_shift_magnitude") = 1.0,
      py::arg("seed") = 0, "Planted-pairs synthetic set as (features, class_ids, scene_ids).");

  m.def(
      "batch_hard_triplet",
      [](const DoubleArray& embeddings, const IntArray& labels, double margin) {
        const auto ls = to_ints(labels);
        const TripletResult r = batch_hard_triplet(to_matrix(embeddings, "embeddings"), ls, margin);
        py::dict d;
        d["loss"] = r.loss.value;
        d["grad"] = to_array(r.loss.grad);
        d["hardest_positive"] = r.hardest_positive;
        d["hardest_negative"] = r.hardest_negative;
        d["active_fraction"] = r.stats.active_fraction;
        return d;
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("margin") = 0.3);

  m.def(
      "compute_ap", [](const IntArray& relevance) { return compute_ap(to_ints(relevance)); },
      py::arg("relevance"));

  m.def(
      "evaluate",
      [](const DoubleArray& query, const IntArray& query_ids, const IntArray& query_scenes, const DoubleArray& gallery,
         const IntArray& gallery_ids, const IntArray& gallery_scenes, bool rerank, std::size_t k1, std::size_t k2,
         double lambda_rr) {
        const RetrievalMeta qm{to_ints(query_ids), to_ints(query_scenes)};
        const RetrievalMeta gm{to_ints(gallery_ids), to_ints(gallery_scenes)};
        const auto rr = rerank ? std::optional<RerankParams>(RerankParams{k1, k2, lambda_rr}) : std::nullopt;
        const EvalResult r = evaluate(to_matrix(query, "query"), qm, to_matrix(gallery, "gallery"), gm, rr);
        return py::make_tuple(r.map, py::array_t<double>(static_cast<py::ssize_t>(r.cmc.size()), r.cmc.data()));
      },
      py::arg("query"), py::arg("query_ids"), py::arg("query_scenes"), py::arg("gallery"), py::arg("gallery_ids"),
      py::arg("gallery_scenes"), py::arg("rerank") = false, py::arg("k1") = 20, py::arg("k2") = 6,
      py::arg("lambda_rr") = 0.3, "Returns (mAP, CMC curve).");

  m.def(
      "k_reciprocal_rerank",
      [](const DoubleArray& query, const DoubleArray& gallery, std::size_t k1, std::size_t k2, double lambda_rr) {
        return to_array(k_reciprocal_rerank(to_matrix(query, "query"), to_matrix(gallery, "gallery"),
                                            RerankParams{k1, k2, lambda_rr}));
      },
      py::arg("query"), py::arg("gallery"), py::arg("k1") = 20, py::arg("k2") = 6, py::arg("lambda_rr") = 0.3);

  m.def(
      "class_similarity_ranking",
      [](const DoubleArray& class_weights, int anchor) {
        return class_similarity_ranking(to_matrix(class_weights, "class_weights"), anchor);
      },
      py::arg("class_weights"), py::arg("anchor"));

  m.def("luma", &luma, py::arg("r"), py::arg("g"), py::arg("b"));

  m.def(
      "horizontal_flip", [](const ByteArray& img) { return to_array(horizontal_flip(to_image(img))); },
      py::arg("image"));

  m.def(
      "grayscale_patch_replacement",
      [](const ByteArray& img, std::uint64_t seed, double p, double area_lo, double area_hi, double aspect_lo,
         double aspect_hi) {
        Rng rng(seed);
        return to_array(
            grayscale_patch_replacement(to_image(img), patch(p, area_lo, area_hi, aspect_lo, aspect_hi), rng));
      },
      py::arg("image"), py::arg("seed"), py::arg("p") = 0.5, py::arg("area_lo") = 0.02, py::arg("area_hi") = 0.4,
      py::arg("aspect_lo") = 0.3, py::arg("aspect_hi") = 3.33);

  m.def(
      "random_erasing",
      [](const ByteArray& img, std::uint64_t seed, double p, double area_lo, double area_hi, double aspect_lo,
         double aspect_hi) {
        Rng rng(seed);
        return to_array(random_erasing(to_image(img), patch(p, area_lo, area_hi, aspect_lo, aspect_hi), rng));
      },
      py::arg("image"), py::arg("seed"), py::arg("p") = 0.5, py::arg("area_lo") = 0.02, py::arg("area_hi") = 0.4,
      py::arg("aspect_lo") = 0.3, py::arg("aspect_hi") = 3.33);

  m.def(
      "train",
      [](const py::object& config) {
        const TrainConfig cfg = parse_config(config);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(cfg, prepare_data(cfg));
        }
        py::list metrics, evals;
        for (const auto& rec : r.metrics) metrics.append(metrics_to_dict(rec));
        for (const auto& e : r.evals) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["map"] = e.map;
          d["cmc1"] = e.cmc1;
          evals.append(d);
        }
        py::dict out;
        out["metrics"] = metrics;
        out["evals"] = evals;
        out["steps"] = r.steps;
        out["class_weights"] = to_array(r.params.class_weights);
        return out;
      },
      py::arg("config"), "Train from a config dict or JSON string; returns metrics, evals and class weights.");

  m.def(
      "train_to_dir",
      [](const py::object& config, const std::string& out_dir, bool metrics_csv) {
        const TrainConfig cfg = parse_config(config);
        py::gil_scoped_release release;
        cmd_train(cfg, out_dir, metrics_csv);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("metrics_csv") = false,
      "Same as the CLI train subcommand.");

  m.def(
      "embed_checkpoint",
      [](const std::string& path, const DoubleArray& inputs) {
        const Checkpoint ck = load_checkpoint(path);
        return to_array(retrieval_embeddings(ck.params, to_matrix(inputs, "inputs"), ck.normalize_embeddings));
      },
      py::arg("checkpoint"), py::arg("inputs"));
}
