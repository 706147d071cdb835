from unittest import main, TestCase

from click.testing import CliRunner
import click

from diwr.messages import (Message, ErrorMessage, StageMessage,
                           WarningMessage)


class MessageTests(TestCase):
    def test_message_construction(self):
        m = Message('3 points are not enough')

        self.assertIsNone(m._color)
        self.assertEqual(m.message, '3 points are not enough')
        self.assertEqual(str(m), 'Message: 3 points are not enough')

    def test_colors(self):
        self.assertEqual(ErrorMessage('x')._color, 'red')
        self.assertEqual(WarningMessage('x')._color, 'yellow')
        self.assertEqual(StageMessage('x')._color, 'cyan')

    def test_equality(self):
        self.assertEqual(ErrorMessage('a'), ErrorMessage('a'))
        self.assertNotEqual(ErrorMessage('a'), ErrorMessage('b'))
        self.assertNotEqual(ErrorMessage('a'), WarningMessage('a'))

    def test_echo(self):
        @click.command()
        def command():
            StageMessage('t=0 area stage').echo()

        result = CliRunner().invoke(command)
        self.assertEqual(result.exit_code, 0)
        self.assertEqual(result.output, 'StageMessage: t=0 area stage\n')


if __name__ == '__main__':
    main()
