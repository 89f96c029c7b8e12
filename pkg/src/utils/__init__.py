# Utils package: errors, validation reports, run configuration, NIfTI I/O and report files
