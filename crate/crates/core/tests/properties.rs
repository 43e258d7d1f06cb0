mod props;

macro_rules! suites {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = props::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

suites!(
    numerics_primitive_gradients,
    numerics_softmax_contract,
    numerics_matmul_oracle,
    numerics_relu_and_rng,
    recurrent_gru_bounded,
    recurrent_gradients,
    recurrent_shapes_and_identity_mlp,
    model_encoder_and_selection,
    model_beam_one_is_greedy,
    model_story_gradients,
    model_forward_paths_deterministic,
    training_ranking_loss_clauses,
    training_zero_lambda_and_negatives,
    training_full_pipeline_gradients,
    training_reproducible,
    data_generated_albums_valid,
    data_vocabulary_and_tokenize,
    evaluation_metric_ranges,
    evaluation_ranks_and_topk,
    harness_checkpoint_round_trip,
    harness_cli_reproducible_and_read_only,
);
