from .validation import check_arrivals, check_boundary_times, check_instance, check_matching

__all__ = ["check_arrivals", "check_boundary_times", "check_instance", "check_matching"]
