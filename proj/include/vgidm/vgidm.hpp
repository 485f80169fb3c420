#pragma once

#include "vgidm/adam.hpp"
#include "vgidm/apps.hpp"
#include "vgidm/autodiff.hpp"
#include "vgidm/checkpoint.hpp"
#include "vgidm/config.hpp"
#include "vgidm/dataset_io.hpp"
#include "vgidm/featurize.hpp"
#include "vgidm/gnn.hpp"
#include "vgidm/graph.hpp"
#include "vgidm/image.hpp"
#include "vgidm/matcher.hpp"
#include "vgidm/metrics.hpp"
#include "vgidm/rng.hpp"
#include "vgidm/scene.hpp"
#include "vgidm/synth.hpp"
#include "vgidm/tensor.hpp"
#include "vgidm/theory.hpp"
#include "vgidm/train.hpp"
