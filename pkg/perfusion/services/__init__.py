"""
🩻 PERFUSION SERVICES

One subpackage per stage of the pipeline:

- volume_model: data types, normalization, artifact I/O
- phantom_sim: synthetic CTP with known hemodynamics
- preprocess: motion correction and bilateral filtering
- vascular_functions: automatic AIF/VOF extraction
- perfusion_fit: box-IRF regression and SVD baseline
- map_regressor: U-Net style map regressor with hand-written backprop
- lesion_validation: core/penumbra segmentation, Dice, Pearson, cohort report
- pipeline: experiment orchestration shared by commands and background runs
"""
