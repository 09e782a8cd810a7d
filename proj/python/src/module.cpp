/*
 * Copyright 2026 The reface Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "reface/cli.hpp"
#include "reface/face_render.hpp"
#include "reface/nifti.hpp"
#include "reface/phantom.hpp"
#include "reface/reface.hpp"
#include "reface/reid.hpp"
#include "reface/report.hpp"
#include "reface/repeatability.hpp"
#include "reface/volume_ops.hpp"

namespace py = pybind11;
using namespace reface;

namespace {

using FArray = py::array_t<float, py::array::f_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::f_style | py::array::forcecast>;

// Volumes cross the boundary as (X, Y, Z) Fortran-ordered arrays so that
// axis 0 stays the fastest varying one, as on disk.
template <typename T>
Grid3<T> grid_from(const py::array_t<T, py::array::f_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) fail(ErrorCode::ShapeMismatch, "expected a 3D array");
  Grid3<T> g({a.shape(0), a.shape(1), a.shape(2)});
  std::copy(a.data(), a.data() + a.size(), g.data.begin());
  return g;
}

template <typename T>
py::array_t<T> array_from(const Grid3<T>& g) {
  py::array_t<T, py::array::f_style> a({g.dims[0], g.dims[1], g.dims[2]});
  std::copy(g.data.begin(), g.data.end(), a.mutable_data());
  return a;
}

py::array_t<double> affine_array(const Affine& m) {
  py::array_t<double> a({4, 4});
  auto r = a.mutable_unchecked<2>();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) r(i, j) = m(i, j);
  return a;
}

Affine affine_from(const py::array_t<double, py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(0) != 4 || a.shape(1) != 4) fail(ErrorCode::ShapeMismatch, "affine must be 4x4");
  auto r = a.unchecked<2>();
  Affine m;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = r(i, j);
  return m;
}

py::dict mesh_dict(const TriMesh& mesh) {
  py::array_t<double> v({static_cast<py::ssize_t>(mesh.vertices.size()), py::ssize_t{3}});
  py::array_t<int> f({static_cast<py::ssize_t>(mesh.triangles.size()), py::ssize_t{3}});
  auto vr = v.mutable_unchecked<2>();
  auto fr = f.mutable_unchecked<2>();
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    for (int c = 0; c < 3; ++c) vr(i, c) = mesh.vertices[i][c];
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
    for (int c = 0; c < 3; ++c) fr(i, c) = mesh.triangles[i][c];
  const MeshTopology t = mesh_topology(mesh);
  py::dict d;
  d["vertices"] = v;
  d["faces"] = f;
  d["area"] = mesh.area();
  d["euler_characteristic"] = t.euler_characteristic();
  d["closed_manifold"] = t.closed_manifold();
  return d;
}

py::array_t<std::uint8_t> image_array(const Image2D& img) {
  py::array_t<std::uint8_t> a({img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), a.mutable_data());
  return a;
}

std::string json_of(const nlohmann::json& j) { return j.dump(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the reface toolkit";

  static py::handle error_type = py::exception<Error>(m, "RefaceError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::class_<NiftiImage>(m, "NiftiImage")
      .def_property_readonly("shape", [](const NiftiImage& img) { return img.dims(); })
      .def_property_readonly("voxel_size", [](const NiftiImage& img) { return img.voxel_size; })
      .def_property_readonly("affine", [](const NiftiImage& img) { return affine_array(img.affine); })
      .def_property_readonly("datatype", [](const NiftiImage& img) { return img.datatype_code; })
      .def_property_readonly("orientation", &NiftiImage::orientation)
      .def("numpy", [](const NiftiImage& img) { return array_from(img.data); })
      .def("with_data", [](const NiftiImage& img, const FArray& a) { return img.with_data(grid_from<float>(a)); });

  m.def("make_image",
        [](const FArray& values, const py::array_t<double, py::array::forcecast>& affine, int datatype) {
          return make_image(grid_from<float>(values), affine_from(affine), datatype);
        },
        py::arg("values"), py::arg("affine"), py::arg("datatype") = nifti_type::kFloat32);
  m.def("read_nifti", &read_nifti, py::arg("path"));
  m.def("write_nifti", &write_nifti, py::arg("image"), py::arg("path"));
  m.def("reorient_asl", [](const NiftiImage& img) {
    std::vector<std::string> warnings;
    NiftiImage out = reorient_asl(img, &warnings);
    return py::make_tuple(out, warnings);
  });
  m.def("winsorize", &winsorize, py::arg("image"), py::arg("cap"));
  m.def("face_air_mask", [](const NiftiImage& img, int radius) { return array_from(face_air_mask(img, radius)); },
        py::arg("defaced"), py::arg("radius") = 1);
  m.def("compute_cap",
        [](const std::vector<double>& maxima, double pct) { return compute_cap(maxima, pct); },
        py::arg("maxima"), py::arg("percentile") = 80.0);

  m.def("head_phantom",
        [](const Dims3& dims, std::uint64_t seed, double voxel_mm) {
          HeadPhantom p = make_head_phantom(dims, seed, voxel_mm);
          py::dict d;
          d["original"] = p.original;
          d["defaced"] = p.defaced;
          d["brain"] = array_from(p.brain);
          d["face_region"] = array_from(p.face_region);
          return d;
        },
        py::arg("dims") = Dims3{64, 64, 64}, py::arg("seed") = 0, py::arg("voxel_mm") = 1.0);

  m.def("reface",
        [](const NiftiImage& defaced, const std::filesystem::path& weights, double dropout, std::uint64_t seed,
           int threads) {
          const ModelWeights w = read_weights(weights);
          RefaceOptions opt;
          opt.dropout_p = dropout;
          opt.seed = seed;
          opt.threads = threads;
          py::gil_scoped_release release;
          return reface_image(reorient_asl(defaced), w, inference_config(w), opt);
        },
        py::arg("defaced"), py::arg("weights"), py::arg("dropout") = 0.25, py::arg("seed") = 0,
        py::arg("threads") = 1);

  m.def("preprocess_for_render", &preprocess_for_render, py::arg("image"), py::arg("sigma") = 1.0,
        py::arg("cap") = kRenderWinsorizeCap);
  m.def("marching_cubes", [](const NiftiImage& img, double t) { return mesh_dict(marching_cubes(img, t)); },
        py::arg("image"), py::arg("threshold"));
  m.def("render_face",
        [](const NiftiImage& preprocessed, double threshold, int width, int height) {
          RenderParams params;
          params.width = width;
          params.height = height;
          params.frame = volume_world_box(preprocessed);
          return image_array(render_frontal(marching_cubes(preprocessed, threshold), params));
        },
        py::arg("preprocessed"), py::arg("threshold"), py::arg("width") = 512, py::arg("height") = 512);

  m.def("cosine_distance", [](const std::vector<double>& a, const std::vector<double>& b) {
    return cosine_distance(a, b);
  });
  m.def("reid_summary",
        [](const std::vector<EmbeddingPair>& pairs, double threshold, const std::string& scale) {
          return json_of(to_json(reid_summary(pairs, threshold, parse_distance_scale(scale))));
        },
        py::arg("pairs"), py::arg("threshold") = kReidThreshold, py::arg("scale") = "raw");
  m.def("kruskal_wallis", [](const std::vector<std::vector<double>>& groups) {
    const KruskalWallis kw = kruskal_wallis(groups);
    return py::make_tuple(kw.h, kw.df);
  });
  m.def("relative_overlap", &relative_overlap, py::arg("a"), py::arg("b"), py::arg("bins") = 50);

  m.def("wilcoxon_signed_rank", [](const std::vector<double>& before, const std::vector<double>& after) {
    return json_of(to_json(wilcoxon_signed_rank(before, after)));
  });
  m.def("benjamini_hochberg",
        [](const std::vector<double>& p, double q) {
          const BhResult r = benjamini_hochberg(p, q);
          return py::make_tuple(r.adjusted, r.rejected);
        },
        py::arg("p"), py::arg("q") = 0.05);
  m.def("coefficient_of_repeatability", &coefficient_of_repeatability);
  m.def("bland_altman", [](const std::vector<double>& before, const std::vector<double>& after) {
    return json_of(to_json(bland_altman(before, after)));
  });
  m.def("dice", [](const U8Array& a, const U8Array& b) { return dice(grid_from<std::uint8_t>(a), grid_from<std::uint8_t>(b)); });
  m.def("compare_volumes",
        [](const std::string& original_csv, const std::string& anonymized_csv, double q) {
          const auto orig = parse_region_volumes(original_csv, "original");
          const auto anon = parse_region_volumes(anonymized_csv, "anonymized");
          return json_of(to_json(compare_volumes(orig, anon, q)));
        },
        py::arg("original_csv"), py::arg("anonymized_csv"), py::arg("q") = 0.05);

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
}
