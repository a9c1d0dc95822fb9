#pragma once

// Umbrella include for the whole library.

#include "trajcogn/autograd.hpp"
#include "trajcogn/backend.hpp"
#include "trajcogn/balltree.hpp"
#include "trajcogn/config.hpp"
#include "trajcogn/csv.hpp"
#include "trajcogn/dataset.hpp"
#include "trajcogn/embedder.hpp"
#include "trajcogn/errors.hpp"
#include "trajcogn/evaltasks.hpp"
#include "trajcogn/geo.hpp"
#include "trajcogn/kinematics.hpp"
#include "trajcogn/lora.hpp"
#include "trajcogn/mapmatch.hpp"
#include "trajcogn/model.hpp"
#include "trajcogn/network.hpp"
#include "trajcogn/pipeline.hpp"
#include "trajcogn/prompt.hpp"
#include "trajcogn/rng.hpp"
#include "trajcogn/sha256.hpp"
#include "trajcogn/synth.hpp"
#include "trajcogn/tokenizer.hpp"
#include "trajcogn/training.hpp"
