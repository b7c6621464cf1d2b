"""Batch processing of crowdsourced aircraft surveillance observations.

The pipeline has four stages, each runnable on its own or end to end
through the ``airtracks`` command line tool:

1. organize - parse raw hourly observation files, filter them, and file
   each aircraft's hour of data into a registry-keyed directory hierarchy
   (year / aircraft type / seat bin / address range).
2. pack - collapse every bottom-tier directory of small hourly files into
   a single zip archive.
3. process - turn each archive into cleaned, 1 Hz resampled track
   segments with above-ground-level altitude and airspace class.
4. stats - aggregate the processed tracks into aircraft-type
   distributions, banded flight-hour totals, and histograms.
"""

__version__ = "0.1.0"
