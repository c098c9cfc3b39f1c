pub mod simplex_oracle;
