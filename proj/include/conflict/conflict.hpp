#pragma once

#include "conflict/checkpoint.hpp"
#include "conflict/data.hpp"
#include "conflict/encoder.hpp"
#include "conflict/errors.hpp"
#include "conflict/experiment.hpp"
#include "conflict/gradcheck.hpp"
#include "conflict/heatmap.hpp"
#include "conflict/interaction.hpp"
#include "conflict/layers.hpp"
#include "conflict/model.hpp"
#include "conflict/synthetic.hpp"
#include "conflict/tensor.hpp"
#include "conflict/training.hpp"
#include "conflict/vocabulary.hpp"
