import pytest

from hsdacs.settings import Settings


class TestSettings:
    @pytest.fixture
    def settings(self):
        return Settings()

    def test_initial_values(self, settings):
        assert settings.enable_cache is True
        assert settings.cache_max_size == 256
        assert settings.show_progress_bar is False
        assert settings.max_workers == 1

    def test_configure_method(self, settings):
        settings.configure(max_workers=4, enable_cache=False)
        assert settings.max_workers == 4
        assert settings.enable_cache is False

    def test_invalid_setting(self, settings):
        with pytest.raises(ValueError, match="Invalid setting: invalid_setting"):
            settings.configure(invalid_setting=True)
